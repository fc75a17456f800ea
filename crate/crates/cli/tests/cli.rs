use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use lrmf_core::eval::{read_records, Manifest, Method};
use lrmf_core::vlasov::read_series;
use tempfile::TempDir;

fn lrmf(dir: &Path, args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_lrmf"))
        .current_dir(dir)
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = lrmf(dir, args);
    assert!(
        out.status.success(),
        "lrmf {args:?} failed:\n{}",
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

const TINY_TRAIN: &str = r#"
[train]
epochs = 2
batch_size = 4
learning_rate = 1e-3

[train.hyperparameters]
stem_dims = [24]
fork_dims = [16]
conv_layers = [{ kernel = 3, stride = 1, padding = 1, dilation = 1, out_channels = 2 }]
"#;

fn tiny_series(dir: &Path, name: &str, nx: &str, nv: &str) {
    ok(dir, &["simulate", "--ic", "landau-strong", "--nx", nx, "--nv", nv, "--steps", "19", "--dt", "0.1", "--out", name]);
}

#[test]
fn simulate_writes_expected_frame_count_and_manifest() {
    let tmp = TempDir::new().unwrap();
    let stdout = ok(
        tmp.path(),
        &["simulate", "--ic", "landau-strong", "--nx", "64", "--nv", "128", "--steps", "100", "--dt", "0.05", "--out", "run.vpts"],
    );
    assert!(stdout.contains("frames: 101"), "{stdout}");
    assert!(stdout.contains("mass drift") && stdout.contains("final field energy"));
    let ts = read_series(tmp.path().join("run.vpts")).unwrap();
    assert_eq!(ts.len(), 101);
    let man = Manifest::read(tmp.path().join("run.vpts.manifest.toml")).unwrap();
    assert_eq!(man.command, "simulate");
    assert_eq!(man.notes["ic_name"], "landau-strong");
    assert!(man.version.starts_with(env!("CARGO_PKG_VERSION")));
    assert_eq!(man.config["nx"].as_integer(), Some(64));
}

#[test]
fn two_stream_header_records_grid() {
    let tmp = TempDir::new().unwrap();
    ok(tmp.path(), &["simulate", "--ic", "two-stream", "--nx", "128", "--nv", "256", "--steps", "2", "--out", "ts.vpts"]);
    let ts = read_series(tmp.path().join("ts.vpts")).unwrap();
    assert_eq!(ts.shape(), (128, 256));
}

#[test]
fn invalid_ic_is_a_usage_error_listing_names() {
    let tmp = TempDir::new().unwrap();
    let out = lrmf(tmp.path(), &["simulate", "--ic", "bump-on-tail", "--out", "x.vpts"]);
    assert_eq!(out.status.code(), Some(2));
    let err = String::from_utf8_lossy(&out.stderr);
    for name in ["landau-strong", "two-stream", "random-smooth"] {
        assert!(err.contains(name), "{err}");
    }
    assert!(!tmp.path().join("x.vpts").exists());

    fs::write(tmp.path().join("bad.toml"), "[simulate]\nic = \"bump\"\n").unwrap();
    let out = lrmf(tmp.path(), &["--config", "bad.toml", "simulate", "--out", "x.vpts"]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("landau-strong"));
}

#[test]
fn flags_override_config_file() {
    let tmp = TempDir::new().unwrap();
    fs::write(
        tmp.path().join("run.toml"),
        "[simulate]\nic = \"random-smooth\"\nnx = 16\nnv = 32\nsteps = 5\nout = \"cfg.vpts\"\n",
    )
    .unwrap();
    ok(tmp.path(), &["--config", "run.toml", "simulate", "--steps", "3"]);
    let ts = read_series(tmp.path().join("cfg.vpts")).unwrap();
    assert_eq!((ts.len(), ts.shape()), (4, (16, 32)));
    let man = Manifest::read(tmp.path().join("cfg.vpts.manifest.toml")).unwrap();
    assert_eq!(man.config["steps"].as_integer(), Some(3));
    assert_eq!(man.seeds["ic"], 0);
}

#[test]
fn help_lists_every_flag() {
    let tmp = TempDir::new().unwrap();
    let expected: [(&str, &[&str]); 5] = [
        ("simulate", &["--ic", "--nx", "--nv", "--dt", "--steps", "--record-every", "--alpha", "--k", "--v0", "--seed", "--smooth-scale", "--out", "--config"]),
        ("train", &["--data", "--ranks", "--split", "--seed", "--augment-random-ic", "--out-dir", "--epochs", "--learning-rate", "--batch-size", "--activation", "--optimizer"]),
        ("evaluate", &["--data", "--checkpoints", "--ranks", "--methods", "--split", "--seed", "--bins", "--out-dir"]),
        ("benchmark", &["--data", "--checkpoints", "--ranks", "--methods", "--frame", "--warmup-runs", "--measured-runs", "--out"]),
        ("export", &["--data", "--frames", "--checkpoint", "--out-dir"]),
    ];
    for (cmd, flags) in expected {
        let help = ok(tmp.path(), &[cmd, "--help"]);
        for f in flags {
            assert!(help.contains(f), "{cmd} --help lacks {f}");
        }
    }
}

#[test]
fn simulate_is_byte_reproducible() {
    let tmp = TempDir::new().unwrap();
    for name in ["a.vpts", "b.vpts"] {
        ok(tmp.path(), &["simulate", "--ic", "two-stream", "--nx", "16", "--nv", "32", "--steps", "10", "--out", name]);
    }
    let read = |n: &str| fs::read(tmp.path().join(n)).unwrap();
    assert_eq!(read("a.vpts"), read("b.vpts"));
    let strip = |n: &str| String::from_utf8(read(n)).unwrap().replace("a.vpts", "").replace("b.vpts", "");
    assert_eq!(strip("a.vpts.manifest.toml"), strip("b.vpts.manifest.toml"));
}

#[test]
fn train_evaluate_export_pipeline() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    tiny_series(dir, "run.vpts", "8", "16");
    fs::write(dir.join("tiny.toml"), TINY_TRAIN).unwrap();
    let train = |out: &str| {
        ok(
            dir,
            &["--config", "tiny.toml", "train", "--data", "run.vpts", "--ranks", "2,3", "--split", "sequential70", "--seed", "7", "--augment-random-ic", "--out-dir", out],
        )
    };
    train("ck");
    train("ck2");
    for r in [2, 3] {
        let a = fs::read(dir.join(format!("ck/convmf_rank{r}.cmf"))).unwrap();
        let b = fs::read(dir.join(format!("ck2/convmf_rank{r}.cmf"))).unwrap();
        assert_eq!(a, b, "rank {r} checkpoint not reproducible");
        let report = fs::read_to_string(dir.join(format!("ck/train_report_rank{r}.csv"))).unwrap();
        assert!(report.starts_with("epoch,train_loss,val_loss,epoch_seconds"));
        assert_eq!(report.lines().count(), 4);
    }
    let man = Manifest::read(dir.join("ck/train.manifest.toml")).unwrap();
    assert_eq!(man.seeds["split"], 7);
    assert_eq!(man.config["split"].as_str(), Some("sequential70"));
    assert_eq!(man.config["augment_random_ic"].as_bool(), Some(true));
    assert_eq!(man.config["hyperparameters"]["stem_dims"].as_array().unwrap().len(), 1);

    let out = lrmf(dir, &["evaluate", "--data", "run.vpts", "--checkpoints", "ck", "--ranks", "2,5", "--out-dir", "ev"]);
    assert!(!out.status.success());
    let err = String::from_utf8_lossy(&out.stderr);
    assert!(err.contains("rank 5") && err.contains("[2, 3]"), "{err}");

    ok(dir, &["evaluate", "--data", "run.vpts", "--checkpoints", "ck", "--ranks", "2,3", "--bins", "7", "--out-dir", "ev"]);
    let records = read_records(fs::File::open(dir.join("ev/records.csv")).unwrap()).unwrap();
    assert_eq!(records.len(), 20 * 2 * Method::ALL.len());
    let header = fs::read_to_string(dir.join("ev/records.csv")).unwrap();
    assert!(header.starts_with("frame_index,rank,method,scaled_loss,wall_time_ns\n"));
    assert!(dir.join("ev/decomposition.csv").exists());
    assert!(dir.join("ev/rank_averages.csv").exists());
    let hist = fs::read_to_string(dir.join("ev/histogram_rank3_calc_v.csv")).unwrap();
    assert_eq!(hist.lines().count(), 8);

    ok(dir, &["export", "--data", "run.vpts", "--frames", "0,4", "--checkpoint", "ck/convmf_rank2.cmf", "--out-dir", "ex"]);
    let u = fs::read_to_string(dir.join("ex/u_00004.csv")).unwrap();
    assert_eq!(u.lines().count(), 8);
    assert_eq!(u.lines().next().unwrap().split(',').count(), 2);
    assert_eq!(fs::read_to_string(dir.join("ex/field_energy.csv")).unwrap().lines().count(), 21);
}

#[test]
fn evaluate_svd_only_needs_no_checkpoint() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    tiny_series(dir, "run.vpts", "8", "16");
    let stdout = ok(
        dir,
        &["evaluate", "--data", "run.vpts", "--methods", "svd_basic,svd_faster", "--ranks", "2,4", "--split", "random70", "--out-dir", "ev"],
    );
    assert!(stdout.contains("svd_faster"));
    let records = read_records(fs::File::open(dir.join("ev/records.csv")).unwrap()).unwrap();
    // 20 frames: 14 train, 3 validation, 3 test.
    assert_eq!(records.len(), 3 * 2 * 2);
    for pair in records.chunks(2) {
        assert!((pair[0].scaled_loss - pair[1].scaled_loss).abs() < 1e-10);
    }
}

#[test]
fn benchmark_emits_one_section_per_size() {
    let tmp = TempDir::new().unwrap();
    let dir = tmp.path();
    tiny_series(dir, "small.vpts", "8", "16");
    tiny_series(dir, "large.vpts", "16", "32");
    let stdout = ok(
        dir,
        &["benchmark", "--data", "small.vpts", "large.vpts", "--ranks", "2,3", "--warmup-runs", "1", "--measured-runs", "5", "--out", "t.csv"],
    );
    assert!(stdout.contains("== 8x16") && stdout.contains("== 16x32"), "{stdout}");
    let csv = fs::read_to_string(dir.join("t.csv")).unwrap();
    assert_eq!(csv.lines().count(), 1 + 2 * 2 * 2);
    assert!(csv.starts_with("source,m,n,rank,method,median_ns,inner_iterations,scaled_loss"));

    let out = lrmf(dir, &["benchmark", "--data", "small.vpts", "--methods", "calc_u", "--out", "u.csv"]);
    assert!(!out.status.success());
    assert!(!dir.join("u.csv").exists());
}

#[test]
fn thread_cap_is_validated() {
    let tmp = TempDir::new().unwrap();
    tiny_series(tmp.path(), "run.vpts", "8", "16");
    let out = Command::new(env!("CARGO_BIN_EXE_lrmf"))
        .current_dir(tmp.path())
        .env("LRMF_THREADS", "zero")
        .args(["evaluate", "--data", "run.vpts", "--ranks", "2"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("LRMF_THREADS"));
    assert!(!tmp.path().join("eval").exists());
}
