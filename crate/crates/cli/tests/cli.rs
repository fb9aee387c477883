use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use min2net::dataio::{self, EventClass, SessionTag};
use min2net::preproc::{Event, RawRecording};
use tempfile::TempDir;

fn min2net(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_min2net"))
        .args(args)
        .env_remove("MIN2NET_SEED")
        .env("RUST_LOG", "warn")
        .output()
        .expect("binary runs")
}

fn code(o: &Output) -> i32 {
    o.status.code().expect("exited normally")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn write_spec(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

const SMALL: &str = "n_subjects = 4\ntrials_per_class = 10\nchannels = 4\nsamples = 200\nfs = 100.0\nnoise = 0.3\n";

fn dir_bytes(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.is_file())
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn help_for_every_subcommand() {
    for sub in [None, Some("synth"), Some("preprocess"), Some("run"), Some("export-latents")] {
        let mut args: Vec<&str> = sub.into_iter().collect();
        args.push("--help");
        let o = min2net(&args);
        assert_eq!(code(&o), 0, "{args:?}");
        assert!(String::from_utf8_lossy(&o.stdout).contains("Usage"));
    }
}

#[test]
fn synth_is_reproducible() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", SMALL);
    let a = tmp.path().join("a");
    let b = tmp.path().join("b");
    assert_eq!(code(&min2net(&["synth", "--spec", &spec, "--out", p(&a)])), 0);
    assert_eq!(code(&min2net(&["synth", "--spec", &spec, "--out", p(&b)])), 0);
    assert_eq!(dir_bytes(&a), dir_bytes(&b));
    let m = dataio::read_manifest(&a).unwrap();
    assert_eq!(m.subjects.len(), 4);
    assert_eq!(m.total_trials(), 4 * 2 * 2 * 10);

    let c = tmp.path().join("c");
    assert_eq!(code(&min2net(&["synth", "--spec", &spec, "--out", p(&c), "--seed", "9"])), 0);
    assert_ne!(dir_bytes(&a), dir_bytes(&c));
    assert!(fs::read_to_string(c.join("resolved_config.toml")).unwrap().contains("seed = 9"));
}

#[test]
fn synth_seed_from_environment() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", SMALL);
    let out = tmp.path().join("e");
    let o = Command::new(env!("CARGO_BIN_EXE_min2net"))
        .args(["synth", "--spec", &spec, "--out", p(&out)])
        .env("MIN2NET_SEED", "41")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0);
    assert!(fs::read_to_string(out.join("resolved_config.toml")).unwrap().contains("seed = 41"));
}

#[test]
fn synth_rejects_negative_counts() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", &SMALL.replace("trials_per_class = 10", "trials_per_class = -2"));
    let o = min2net(&["synth", "--spec", &spec, "--out", p(&tmp.path().join("x"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("trials_per_class"), "{}", stderr(&o));
    assert!(!tmp.path().join("x").exists());
}

fn raw_dir(dir: &Path) {
    let fs_hz = 250.0;
    let n = 2500;
    let names: Vec<String> = ["C3", "Cz", "C4"].iter().map(|s| s.to_string()).collect();
    let mut recs = Vec::new();
    for subject in [1u32, 2] {
        for (si, tag) in [SessionTag::offline(0), SessionTag::online(1)].into_iter().enumerate() {
            let mut samples = Vec::with_capacity(3 * n);
            for c in 0..3 {
                for i in 0..n {
                    let t = i as f64 / fs_hz;
                    let v = 3.0 * (2.0 * std::f64::consts::PI * (11.0 + c as f64) * t).sin()
                        + (2.0 * std::f64::consts::PI * 50.0 * t).sin()
                        + 0.1 * subject as f64
                        + 0.01 * si as f64;
                    samples.push(v as f32);
                }
            }
            let events = (0..4)
                .map(|k| Event {
                    sample: 100 + 500 * k,
                    code: if k % 2 == 0 { 769 } else { 770 },
                })
                .collect();
            recs.push(RawRecording::new(samples, names.clone(), fs_hz, events, subject, tag).unwrap());
        }
    }
    let classes = [
        EventClass { code: 769, name: "left".into() },
        EventClass { code: 770, name: "right".into() },
    ];
    dataio::write_raw_dir(dir, "handmade", &recs, &classes).unwrap();
}

#[test]
fn preprocess_raw_recordings() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    raw_dir(&raw);
    let chans = write_spec(tmp.path(), "chans.txt", "C4\nC3\n");
    let out = tmp.path().join("ds");
    let args = |o: &Path| {
        vec![
            "preprocess".to_string(),
            "--in".into(),
            p(&raw).into(),
            "--band".into(),
            "8:30".into(),
            "--fs".into(),
            "100".into(),
            "--window".into(),
            "0:1".into(),
            "--channels".into(),
            chans.clone(),
            "--out".into(),
            p(o).into(),
        ]
    };
    let a: Vec<String> = args(&out);
    let o = min2net(&a.iter().map(String::as_str).collect::<Vec<_>>());
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let ds = dataio::read_dataset(&out).unwrap();
    assert_eq!(ds.len(), 2 * 2 * 4);
    assert_eq!(ds.n_channels(), 2);
    assert_eq!(ds.n_samples(), 100);
    assert_eq!(ds.fs(), 100.0);
    assert_eq!(ds.channel_names, vec!["C4", "C3"]);
    assert_eq!(ds.class_names, vec!["left", "right"]);
    assert_eq!(&ds.labels()[..4], &[0, 1, 0, 1]);

    let again = tmp.path().join("ds2");
    let a: Vec<String> = args(&again);
    assert_eq!(code(&min2net(&a.iter().map(String::as_str).collect::<Vec<_>>())), 0);
    assert_eq!(dir_bytes(&out), dir_bytes(&again));
}

#[test]
fn preprocess_rejects_inverted_band() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    raw_dir(&raw);
    let o = min2net(&["preprocess", "--in", p(&raw), "--band", "40:30", "--out", p(&tmp.path().join("ds"))]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("40"), "{}", stderr(&o));
}

#[test]
fn preprocess_reports_corrupt_recording() {
    let tmp = TempDir::new().unwrap();
    let raw = tmp.path().join("raw");
    raw_dir(&raw);
    let victim = raw.join("sub002_online1.mirw");
    let mut bytes = fs::read(&victim).unwrap();
    bytes[200] ^= 0x40;
    fs::write(&victim, bytes).unwrap();
    let o = min2net(&["preprocess", "--in", p(&raw), "--window", "0:1", "--out", p(&tmp.path().join("ds"))]);
    assert_eq!(code(&o), 1);
    assert!(stderr(&o).contains("sub002_online1.mirw"), "{}", stderr(&o));
}

fn small_run(tmp: &Path) -> (String, std::path::PathBuf) {
    let spec = write_spec(tmp, "s.toml", SMALL);
    let ds = tmp.join("ds");
    assert_eq!(code(&min2net(&["synth", "--spec", &spec, "--out", p(&ds)])), 0);
    let cfg = write_spec(
        tmp,
        "run.toml",
        "seed = 3\n[model]\nmse_elementwise = true\n[train]\nmax_epochs = 2\n",
    );
    (cfg, ds)
}

#[test]
fn run_then_export_latents() {
    let tmp = TempDir::new().unwrap();
    let (cfg, ds) = small_run(tmp.path());
    let out = tmp.path().join("res");
    let o = min2net(&["run", "--data", p(&ds), "--scheme", "dependent", "--config", &cfg, "--out", p(&out)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let csv = fs::read_to_string(out.join("results.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 20);
    assert!(csv.lines().skip(1).all(|l| l.contains(",ok,")));
    let resolved = fs::read_to_string(out.join("resolved_config.toml")).unwrap();
    assert!(resolved.contains("seed = 3") && resolved.contains("max_epochs = 2"));
    assert!(String::from_utf8_lossy(&o.stdout).contains("over subjects"));

    let ckpt = out.join("checkpoints").join("fold_2_3.mn2c");
    let lat = tmp.path().join("lat.csv");
    let o = min2net(&["export-latents", "--checkpoint", p(&ckpt), "--data", p(&ds), "--out", p(&lat)]);
    assert_eq!(code(&o), 0, "{}", stderr(&o));
    let text = fs::read_to_string(&lat).unwrap();
    assert_eq!(text.lines().count(), 1 + 160);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 3 + 4);

    let spec6 = write_spec(tmp.path(), "s6.toml", &SMALL.replace("channels = 4", "channels = 6"));
    let ds6 = tmp.path().join("ds6");
    assert_eq!(code(&min2net(&["synth", "--spec", &spec6, "--out", p(&ds6)])), 0);
    let o = min2net(&["export-latents", "--checkpoint", p(&ckpt), "--data", p(&ds6), "--out", p(&lat)]);
    assert_eq!(code(&o), 2);
    let err = stderr(&o);
    assert!(err.contains("channels = 4") && err.contains("channels = 6"), "{err}");

    let o = min2net(&["export-latents", "--checkpoint", p(&tmp.path().join("missing.mn2c")), "--data", p(&ds), "--out", p(&lat)]);
    assert_eq!(code(&o), 1);
}

#[test]
fn dependent_scheme_needs_two_sessions() {
    let tmp = TempDir::new().unwrap();
    let spec = write_spec(tmp.path(), "s.toml", &format!("{SMALL}sessions = 1\n"));
    let ds = tmp.path().join("ds");
    assert_eq!(code(&min2net(&["synth", "--spec", &spec, "--out", p(&ds)])), 0);
    let out = tmp.path().join("res");
    let o = min2net(&["run", "--data", p(&ds), "--scheme", "dependent", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("single session"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn run_config_errors() {
    let tmp = TempDir::new().unwrap();
    let (_, ds) = small_run(tmp.path());
    let out = p(&tmp.path().join("res")).to_string();
    let bad = write_spec(tmp.path(), "bad.toml", "[train]\nlearning_rate = 0.1\n");
    let o = min2net(&["run", "--data", p(&ds), "--scheme", "independent", "--config", &bad, "--out", &out]);
    assert_eq!(code(&o), 2);
    assert!(stderr(&o).contains("learning_rate"), "{}", stderr(&o));

    let o = min2net(&["run", "--data", p(&ds), "--out", &out]);
    assert_eq!(code(&o), 2);

    let o = min2net(&["run", "--data", p(&ds), "--scheme", "independent", "--augment", "rotate", "--out", &out]);
    assert_eq!(code(&o), 2);

    let o = min2net(&["run", "--data", p(&tmp.path().join("nowhere")), "--scheme", "independent", "--out", &out]);
    assert_eq!(code(&o), 1);
}
