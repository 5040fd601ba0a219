use std::fs;
use std::path::{Path, PathBuf};

use mvns_core::runner::{self, exit, Config, Overrides, RunManifest, RunSummary, SUMMARY_FILE};
use mvns_core::Error;

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("tests/fixtures").join(name)
}

fn load(name: &str, overrides: &Overrides) -> mvns_core::Result<RunManifest> {
    runner::parse_config(&fixture(name), overrides)
}

#[test]
fn small_moment_run_passes_and_writes_reports() {
    let manifest = load("small_moment.toml", &Overrides::default()).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = runner::run(&manifest, dir.path()).unwrap();
    assert!(summary.pass, "{:?}", summary.reports);
    assert_eq!(summary.exit_code(), exit::PASS);
    for f in ["manifest.json", "ledger.csv", "reports/moment.json", "reports/regularity.json", "moment_curves.csv"] {
        assert!(dir.path().join(f).is_file(), "missing {f}");
    }
    let stored: RunSummary = serde_json::from_str(&fs::read_to_string(dir.path().join(SUMMARY_FILE)).unwrap()).unwrap();
    assert_eq!(stored.hash, manifest.hash);
    let csv = fs::read_to_string(dir.path().join("moment_curves.csv")).unwrap();
    assert!(csv.starts_with("report,quantity,t,mean,stderr,bound\n"));
}

#[test]
fn rerun_gives_identical_csvs() {
    let manifest = load("small_moment.toml", &Overrides::default()).unwrap();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    runner::run(&manifest, a.path()).unwrap();
    runner::run(&manifest, b.path()).unwrap();
    for f in ["ledger.csv", "moment_curves.csv", "trajectory.csv"] {
        assert_eq!(fs::read(a.path().join(f)).unwrap(), fs::read(b.path().join(f)).unwrap(), "{f} differs");
    }
}

#[test]
fn non_dissipative_config_is_refused_unless_forced() {
    let err = load("weak_viscosity.toml", &Overrides::default()).unwrap_err();
    assert!(matches!(err, Error::NotDissipative { .. }), "{err}");
    assert_eq!(runner::exit_code(&err), exit::NOT_DISSIPATIVE);

    let forced = load("weak_viscosity.toml", &Overrides { force: true, ..Default::default() }).unwrap();
    let dir = tempfile::tempdir().unwrap();
    let summary = runner::run(&forced, dir.path()).unwrap();
    let moment = &summary.reports[0];
    assert!(moment.skipped);
    assert!(summary.pass);
}

#[test]
fn small_lipschitz_constant_names_the_violated_assumption() {
    let err = load("small_lipschitz.toml", &Overrides::default()).unwrap_err();
    match &err {
        Error::AssumptionViolated { id, .. } => assert_eq!(id, "diffusion_lipschitz"),
        other => panic!("unexpected error {other}"),
    }
    assert_eq!(runner::exit_code(&err), exit::ASSUMPTION);
}

#[test]
fn malformed_config_is_a_config_error() {
    let err = load("malformed.toml", &Overrides::default()).unwrap_err();
    assert_eq!(runner::exit_code(&err), exit::CONFIG);
}

#[test]
fn hash_is_stable_and_tracks_overrides() {
    let a = load("small_moment.toml", &Overrides::default()).unwrap();
    let b = load("small_moment.toml", &Overrides::default()).unwrap();
    assert_eq!(a.hash, b.hash);
    let c = load("small_moment.toml", &Overrides { seed: Some(99), ..Default::default() }).unwrap();
    assert_ne!(a.hash, c.hash);
    assert_eq!(c.config.defaults.seed, 99);
}

#[test]
fn manifest_json_round_trips() {
    let a = load("small_moment.toml", &Overrides::default()).unwrap();
    let text = a.to_json().unwrap();
    let b = RunManifest::from_json(&text, &Overrides::default()).unwrap();
    assert_eq!(a.hash, b.hash);
    assert_eq!(a.config, b.config);

    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("manifest.json");
    fs::write(&path, &text).unwrap();
    assert_eq!(runner::parse_config(&path, &Overrides::default()).unwrap().hash, a.hash);

    let tampered = text.replacen(&a.hash, &"0".repeat(64), 1);
    assert!(RunManifest::from_json(&tampered, &Overrides::default()).is_err());
}

#[test]
fn plots_rebuild_from_reports() {
    let manifest = load("small_moment.toml", &Overrides::default()).unwrap();
    let run_dir = tempfile::tempdir().unwrap();
    runner::run(&manifest, run_dir.path()).unwrap();
    let out = tempfile::tempdir().unwrap();
    let inputs = runner::load_plot_inputs(run_dir.path()).unwrap();
    let files = runner::emit_plots(&inputs, out.path()).unwrap();
    assert_eq!(files, vec!["moment_curves.csv".to_string()]);
    assert_eq!(
        fs::read(out.path().join("moment_curves.csv")).unwrap(),
        fs::read(run_dir.path().join("moment_curves.csv")).unwrap()
    );

    let missing = runner::load_plot_inputs(&run_dir.path().join("nowhere")).unwrap_err();
    assert_eq!(runner::exit_code(&missing), exit::IO);
}

#[test]
fn default_config_parses_from_empty_toml() {
    assert_eq!(Config::from_toml("").unwrap(), Config::default());
}
