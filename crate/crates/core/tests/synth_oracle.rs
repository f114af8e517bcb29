use pmarb::detect::Path;
use pmarb::model::Phase;
use pmarb::synth::{brute_force_scan, generate, verify, InjectionSpec, ScenarioSpec};
use pmarb::{scan_game, BookView};

fn inj(path: Path, market: &str, phase: Phase, start: usize, length: usize, edge: i64, size: i64) -> InjectionSpec {
    InjectionSpec {
        game: 0,
        path,
        market: market.into(),
        phase,
        start,
        length,
        edge_ticks: edge,
        size,
    }
}

fn check(spec: &ScenarioSpec) {
    let (bundles, manifest) = generate(spec).unwrap();
    let cfg = spec.scan_config().unwrap();
    let mut scans = Vec::new();
    for b in &bundles {
        let scan = scan_game(b, &cfg).unwrap();
        let oracle = brute_force_scan(b, &cfg).unwrap();
        assert_eq!(scan.single, oracle.single, "single episodes differ for {}", b.slug());
        assert_eq!(scan.combo, oracle.combo, "combo episodes differ for {}", b.slug());
        assert_eq!(scan.single_stats.evaluated, oracle.single_evaluated);
        assert_eq!(scan.combo_stats.evaluated, oracle.combo_evaluated);
        assert_eq!(scan.single_stats.excluded_signals(), oracle.single_excluded_signals);
        assert_eq!(scan.single_stats.artifact_episodes, oracle.single_artifact_episodes);
        assert_eq!(scan.combo_stats.artifact_episodes, oracle.combo_artifact_episodes);
        scans.push(scan);
    }
    let problems = verify(&manifest, &scans);
    assert!(problems.is_empty(), "{problems:#?}");
}

#[test]
fn baseline_is_clean() {
    for seed in 0..5 {
        check(&ScenarioSpec::baseline(seed, 400));
    }
}

#[test]
fn injected_long_and_combo_are_recovered() {
    let mut spec = ScenarioSpec::baseline(7, 400);
    spec.games = 2;
    spec.injections = vec![
        inj(Path::Long, "ml", Phase::PreGame, 3, 4, 2, 500),
        inj(Path::Long, "total:0", Phase::InGame, 10, 6, 3, 20),
        inj(Path::Long, "spread:1", Phase::InGame, 40, 2, 6, 40),
        inj(Path::Combo, "spread:0", Phase::InGame, 100, 5, 7, 300),
        inj(Path::Long, "ml", Phase::PostGame, 2, 3, 2, 40),
        InjectionSpec { game: 1, ..inj(Path::Combo, "spread:1", Phase::PreGame, 20, 1, 12, 30) },
        InjectionSpec { game: 1, ..inj(Path::Combo, "spread:0", Phase::PostGame, 5, 2, 4, 30) },
    ];
    check(&spec);
}

#[test]
fn short_path_under_venue_effective_books() {
    let mut spec = ScenarioSpec::baseline(11, 300);
    spec.book_view = BookView::Effective;
    spec.injections = vec![
        inj(Path::Short, "ml", Phase::InGame, 5, 3, 4, 60),
        inj(Path::Short, "total:0", Phase::PreGame, 5, 2, 9, 15),
        inj(Path::Long, "spread:0", Phase::InGame, 50, 3, 2, 200),
    ];
    check(&spec);
}
