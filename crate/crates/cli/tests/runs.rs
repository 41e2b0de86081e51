use std::fs;
use std::path::Path;

use chaoslab_cli::error::CliError;
use chaoslab_cli::plotdata::emit_plotdata;
use chaoslab_cli::runner::{resume, run, RunManifest, RunStatus, SERIES_FILE};

const SMALL: &str = "preset = \"custom\"\nkernel = \"kuramoto\"\nn_particles = 6\nreplicas = 40\nsigma = 0.5\ndt = 0.01\nt_max = 1.0\nsnapshot_every = 0.25\nseed = 4\n";

fn read(dir: &Path, name: &str) -> Vec<u8> {
    fs::read(dir.join(name)).unwrap()
}

fn snapshots(dir: &Path) -> Vec<Vec<u8>> {
    let m = RunManifest::load(dir).unwrap();
    m.snapshots.iter().map(|s| read(dir, &s.file)).collect()
}

#[test]
fn degenerate_horizon_emits_initial_diagnostics_only() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = "preset = \"custom\"\nt_max = 0.0\nreplicas = 20\n";
    let out = run(cfg, tmp.path(), None).unwrap();
    assert!(out.complete);
    assert_eq!(out.exit_code(), 0);
    let series = String::from_utf8(read(tmp.path(), SERIES_FILE)).unwrap();
    let rows: Vec<&str> = series.lines().filter(|l| !l.starts_with('#')).skip(1).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.starts_with("0,")), "{rows:?}");
}

#[test]
fn identical_configs_give_identical_outputs() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(SMALL, a.path(), None).unwrap();
    run(SMALL, b.path(), None).unwrap();
    assert_eq!(read(a.path(), SERIES_FILE), read(b.path(), SERIES_FILE));
    assert_eq!(snapshots(a.path()), snapshots(b.path()));
}

#[test]
fn interrupted_run_resumes_to_the_same_outputs() {
    let straight = tempfile::tempdir().unwrap();
    run(SMALL, straight.path(), None).unwrap();

    let halted = tempfile::tempdir().unwrap();
    let first = run(SMALL, halted.path(), Some(2)).unwrap();
    assert!(!first.complete);
    let m = RunManifest::load(halted.path()).unwrap();
    assert_eq!(m.status, RunStatus::Partial);
    assert_eq!(m.snapshots.len(), 2);
    assert!(!halted.path().join(SERIES_FILE).exists());

    let second = resume(halted.path(), None).unwrap();
    assert!(second.complete);
    assert_eq!(read(straight.path(), SERIES_FILE), read(halted.path(), SERIES_FILE));
    assert_eq!(snapshots(straight.path()), snapshots(halted.path()));

    let again = resume(halted.path(), None).unwrap();
    assert!(again.complete && again.verdicts.is_empty());
    assert_eq!(again.exit_code(), 0);
}

#[test]
fn corrupt_snapshot_is_refused_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    run(SMALL, tmp.path(), Some(2)).unwrap();
    let m = RunManifest::load(tmp.path()).unwrap();
    let victim = tmp.path().join(&m.snapshots[1].file);
    let mut bytes = fs::read(&victim).unwrap();
    let last = bytes.len() - 1;
    bytes[last] ^= 0xff;
    fs::write(&victim, bytes).unwrap();
    match resume(tmp.path(), None) {
        Err(e @ CliError::Checksum(_)) => {
            assert!(e.to_string().contains("snap_00001.bin"), "{e}");
            assert_eq!(e.exit_code(), 2);
        }
        other => panic!("{other:?}"),
    }
}

#[test]
fn bad_config_fails_before_any_output() {
    let tmp = tempfile::tempdir().unwrap();
    let dir = tmp.path().join("out");
    let err = run("preset = \"custom\"\nreplica = 3\n", &dir, None).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(!dir.exists());
}

#[test]
fn sobolev_preset_passes_with_defaults() {
    let tmp = tempfile::tempdir().unwrap();
    let out = run("preset = \"sobolev-audit\"\n", tmp.path(), None).unwrap();
    assert_eq!(out.verdicts.len(), 2);
    assert!(out.verdicts.iter().all(|v| v.passed()), "{:?}", out.verdicts);
    assert_eq!(out.exit_code(), 0);
}

#[test]
fn plotdata_merges_runs_by_seed() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    run(SMALL, a.path(), None).unwrap();
    run(&SMALL.replace("seed = 4", "seed = 5"), b.path(), None).unwrap();
    let files = [a.path().join(SERIES_FILE), b.path().join(SERIES_FILE)];
    let csv = emit_plotdata(&files).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("t,k,N,sigma,seed,metric,value,stderr"));
    let seeds: std::collections::BTreeSet<&str> = lines.map(|l| l.split(',').nth(4).unwrap()).collect();
    assert_eq!(seeds.into_iter().collect::<Vec<_>>(), vec!["4", "5"]);
    assert_eq!(csv, emit_plotdata(&files).unwrap());
}
