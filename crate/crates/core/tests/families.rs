use std::collections::BTreeSet;

use ipg_core::bruteforce::{all_pnes, enumerate_feasible, regrets};
use ipg_core::io::{GameFile, InstanceFile};
use ipg_core::kpg::{build_kpg, generate_kpg, Distribution};
use ipg_core::master::{enumerate_pnes, epsilon_pne, select_best_pne, CutBatch, Mode, SolveConfig};
use ipg_core::models::cfld::{build_cfld, generate_cfld};
use ipg_core::models::qipg::{build_qipg, generate_qipg};
use ipg_core::nfg::{build_nfg, generate_grid, generate_grid_with, GridOptions, WeightScheme};
use ipg_core::rational::int;
use ipg_core::{GameInstance, StrategyProfile};

fn enumerate_all() -> SolveConfig {
    SolveConfig::with_mode(Mode::Enumerate { limit: None })
}

fn assert_matches_brute_force(label: &str, game: &GameInstance) {
    let truth = all_pnes(game).unwrap();
    let report = enumerate_pnes(game, &enumerate_all()).unwrap();
    let want: BTreeSet<StrategyProfile> = truth.pnes.iter().map(|p| p.profile.clone()).collect();
    let got: BTreeSet<StrategyProfile> = report.pnes.iter().map(|p| p.profile.clone()).collect();
    assert_eq!(got, want, "{label}");
    let best = select_best_pne(game, &SolveConfig::default()).unwrap();
    assert_eq!(
        best.best().map(|p| p.welfare),
        truth.best_pne_welfare(game.sense()),
        "{label}"
    );
    assert_eq!(best.osw, Some(truth.osw), "{label}");
}

#[test]
fn network_games_match_brute_force() {
    for seed in 0..4 {
        let inst = generate_grid(6, 2, seed);
        assert_matches_brute_force(&format!("nfg seed {seed}"), &build_nfg(&inst).unwrap());
    }
    let opts = GridOptions {
        weights: WeightScheme::Skewed,
        separate_endpoints: false,
    };
    let inst = generate_grid_with(8, 2, opts, 3);
    assert_matches_brute_force("skewed nfg", &build_nfg(&inst).unwrap());
}

#[test]
fn facility_games_match_brute_force() {
    for seed in 0..4 {
        let inst = generate_cfld(2, 2, 3, 2, seed);
        assert_matches_brute_force(&format!("cfld seed {seed}"), &build_cfld(&inst).unwrap());
    }
}

#[test]
fn quadratic_games_match_brute_force() {
    for seed in 0..6 {
        let inst = generate_qipg(2, 2, Some((-1, 2)), seed % 2 == 0, seed);
        assert_matches_brute_force(&format!("qipg seed {seed}"), &build_qipg(&inst).unwrap());
    }
}

#[test]
fn cut_batching_and_parallel_oracle_agree() {
    for seed in 0..5 {
        let game = build_kpg(&generate_kpg(3, 5, Distribution::B, 5, seed)).unwrap();
        let base = enumerate_pnes(&game, &enumerate_all()).unwrap();
        let mut one = enumerate_all();
        one.cut_batch = CutBatch::One;
        let mut par = enumerate_all();
        par.parallel_oracle = true;
        for cfg in [one, par] {
            let r = enumerate_pnes(&game, &cfg).unwrap();
            assert_eq!(r.status, base.status);
            let a: Vec<_> = r
                .pnes
                .iter()
                .map(|p| (p.welfare, p.profile.clone()))
                .collect();
            let b: Vec<_> = base
                .pnes
                .iter()
                .map(|p| (p.welfare, p.profile.clone()))
                .collect();
            assert_eq!(a.len(), b.len(), "seed {seed}");
            assert_eq!(
                a.iter().collect::<BTreeSet<_>>(),
                b.iter().collect::<BTreeSet<_>>()
            );
        }
    }
}

#[test]
fn minimal_epsilon_matches_exhaustive_regrets() {
    for seed in 0..5 {
        let game = build_qipg(&generate_qipg(2, 1, Some((0, 3)), false, seed)).unwrap();
        let r = epsilon_pne(
            &game,
            &SolveConfig::with_mode(Mode::EpsilonMin { bound: None }),
        )
        .unwrap();
        let truth = all_pnes(&game).unwrap();
        let (xs, ys) = (
            enumerate_feasible(&game, 0).unwrap(),
            enumerate_feasible(&game, 1).unwrap(),
        );
        let best = xs
            .iter()
            .flat_map(|x| {
                ys.iter()
                    .map(move |y| StrategyProfile::new(vec![x.clone(), y.clone()]))
            })
            .map(|p| regrets(&game, &p).unwrap().into_iter().max().unwrap())
            .min()
            .unwrap();
        assert_eq!(r.epsilon, Some(best), "seed {seed}");
        if truth.pnes.is_empty() {
            assert!(best > int(0));
        }
    }
}

#[test]
fn generic_file_roundtrip_keeps_results() {
    let inst = generate_qipg(2, 2, Some((-2, 2)), false, 4);
    let game = build_qipg(&inst).unwrap();
    let file = InstanceFile::Game(GameFile::from_game(&game).unwrap());
    let back = InstanceFile::parse(&file.to_json())
        .unwrap()
        .to_game()
        .unwrap();
    let a = enumerate_pnes(&game, &enumerate_all()).unwrap();
    let b = enumerate_pnes(&back, &enumerate_all()).unwrap();
    assert_eq!(a.status, b.status);
    let key = |r: &ipg_core::report::SolveReport| -> Vec<_> {
        r.pnes
            .iter()
            .map(|p| (p.welfare, p.profile.clone()))
            .collect()
    };
    assert_eq!(key(&a), key(&b));
    assert_eq!(a.osw, b.osw);
}

#[test]
fn ratio_payoffs_have_no_generic_form() {
    let game = build_cfld(&generate_cfld(2, 2, 2, 1, 4)).unwrap();
    assert!(GameFile::from_game(&game).is_err());
}

#[test]
fn specialised_files_roundtrip() {
    let files = [
        InstanceFile::Kpg(generate_kpg(2, 4, Distribution::A, 2, 1)),
        InstanceFile::Nfg(generate_grid(10, 2, 1)),
        InstanceFile::Qipg(generate_qipg(2, 2, None, true, 1)),
        InstanceFile::Cfld(generate_cfld(2, 2, 2, 2, 1)),
    ];
    for f in files {
        let back = InstanceFile::parse(&f.to_json()).unwrap();
        assert_eq!(back, f, "{}", f.kind());
    }
}
