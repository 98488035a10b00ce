//! End-to-end runs of the `fallsense` binary: exit codes, config
//! precedence, determinism and file round trips.

use std::path::Path;
use std::process::{Command, Output};
use std::sync::OnceLock;

use fallsense::fusion::{run_session, FusionConfig};
use fallsense::neural::{load_cnn, load_mlp};
use fallsense::synth::{gen_scenario, ScenarioKind};
use fallsense_cli::commands::{cmd_generate, cmd_train, DatasetSize, Generate, ModelChoice};
use fallsense_cli::config::{KeyValues, RunConfig};
use fallsense_cli::formats;
use tempfile::TempDir;

fn fallsense(args: &[&str], dir: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_fallsense"))
        .args(args)
        .current_dir(dir)
        .env_remove("FALLSENSE_SEED")
        .env_remove("RUST_LOG")
        .output()
        .unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn read(path: impl AsRef<Path>) -> Vec<u8> {
    std::fs::read(path).unwrap()
}

/// Small models trained once through the library entry points.
struct Trained {
    dir: TempDir,
}

impl Trained {
    fn path(&self, name: &str) -> String {
        self.dir.path().join(name).to_str().unwrap().to_string()
    }
}

fn trained() -> &'static Trained {
    static T: OnceLock<Trained> = OnceLock::new();
    T.get_or_init(|| {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = RunConfig::default();
        cfg.train.epochs = 30;
        let ds = dir.path().join("ds");
        cmd_generate(Generate::Dataset(DatasetSize::Uniform(150)), &ds, &cfg).unwrap();
        cmd_train(ModelChoice::Imu, &ds, &dir.path().join("mlp.fsnn"), &cfg).unwrap();
        cmd_train(ModelChoice::Csi, &ds, &dir.path().join("cnn.fsnn"), &cfg).unwrap();
        Trained { dir }
    })
}

#[test]
fn help_and_usage_errors() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(code(&fallsense(&["--help"], dir.path())), 0);
    assert_eq!(code(&fallsense(&[], dir.path())), 1);
    assert_eq!(code(&fallsense(&["explode"], dir.path())), 1);
    assert_eq!(
        code(&fallsense(
            &["generate", "--scenario", "juggle", "--out", "x"],
            dir.path()
        )),
        1
    );
    assert_eq!(
        code(&fallsense(&["generate", "--classes", "0", "--out", "x"], dir.path())),
        1
    );
    assert_eq!(code(&fallsense(&["generate", "--scenario", "throw"], dir.path())), 1);

    std::fs::write(dir.path().join("bad.conf"), "fusion.colour = blue\n").unwrap();
    let out = fallsense(
        &["--config", "bad.conf", "generate", "--scenario", "throw", "--out", "x"],
        dir.path(),
    );
    assert_eq!(code(&out), 1);
    assert!(String::from_utf8_lossy(&out.stderr).contains("fusion.colour"));

    std::fs::write(dir.path().join("range.conf"), "fusion.vote_threshold = 40\n").unwrap();
    let out = fallsense(
        &[
            "--config",
            "range.conf",
            "generate",
            "--scenario",
            "throw",
            "--out",
            "x",
        ],
        dir.path(),
    );
    assert_eq!(code(&out), 1);

    let out = Command::new(env!("CARGO_BIN_EXE_fallsense"))
        .args(["generate", "--scenario", "throw", "--out", "x"])
        .current_dir(dir.path())
        .env("FALLSENSE_SEED", "seven")
        .output()
        .unwrap();
    assert_eq!(code(&out), 1);
}

#[test]
fn generate_is_deterministic_and_seeded() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    for out in ["a", "b"] {
        assert_eq!(
            code(&fallsense(
                &["generate", "--scenario", "fall-static", "--seed", "1", "--out", out],
                d
            )),
            0
        );
    }
    for file in ["imu.csv", "csi.csv", "manifest.txt"] {
        assert_eq!(read(d.join("a").join(file)), read(d.join("b").join(file)), "{file}");
    }
    let manifest = KeyValues::read(&d.join("a/manifest.txt")).unwrap();
    assert_eq!(manifest.get("scenario"), Some("fall-static"));
    assert_eq!(manifest.get("seed"), Some("1"));
    assert_eq!(manifest.get("fusion.vote_threshold"), Some("3"));

    // environment seed, then config file, then flag
    let with_env = |args: &[&str]| {
        Command::new(env!("CARGO_BIN_EXE_fallsense"))
            .args(args)
            .current_dir(d)
            .env("FALLSENSE_SEED", "1")
            .output()
            .unwrap()
    };
    assert_eq!(
        code(&with_env(&["generate", "--scenario", "fall-static", "--out", "env"])),
        0
    );
    assert_eq!(read(d.join("env/imu.csv")), read(d.join("a/imu.csv")));

    std::fs::write(d.join("seed.conf"), "seed = 2\n").unwrap();
    assert_eq!(
        code(&with_env(&[
            "--config",
            "seed.conf",
            "generate",
            "--scenario",
            "fall-static",
            "--out",
            "conf"
        ])),
        0
    );
    assert_eq!(
        KeyValues::read(&d.join("conf/manifest.txt")).unwrap().get("seed"),
        Some("2")
    );
    assert_eq!(
        code(&with_env(&[
            "--config",
            "seed.conf",
            "--seed",
            "5",
            "generate",
            "--scenario",
            "fall-static",
            "--out",
            "flag"
        ])),
        0
    );
    assert_eq!(
        KeyValues::read(&d.join("flag/manifest.txt")).unwrap().get("seed"),
        Some("5")
    );
    assert_ne!(read(d.join("flag/imu.csv")), read(d.join("a/imu.csv")));
}

#[test]
fn dataset_manifest_records_counts() {
    let dir = tempfile::tempdir().unwrap();
    let out = fallsense(&["generate", "--classes", "2", "--out", "ds"], dir.path());
    assert_eq!(code(&out), 0);
    let kv = KeyValues::read(&dir.path().join("ds/manifest.txt")).unwrap();
    assert_eq!(kv.get("kind"), Some("dataset"));
    assert_eq!(kv.get("count.fall"), Some("2"));
    assert_eq!(kv.get("total.imu"), Some("20"));
    assert_eq!(kv.get("total.csi"), Some("4"));
    assert_eq!(kv.get("seed"), Some("7"));
    let features = String::from_utf8(read(dir.path().join("ds/imu_features.csv"))).unwrap();
    assert_eq!(features.lines().count(), 21);
    assert!(features.starts_with("label,split,acc_p1_max,"));
}

#[test]
fn untrained_model_scores_near_chance() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&fallsense(&["generate", "--classes", "30", "--out", "ds"], d)), 0);
    let out = fallsense(
        &[
            "train",
            "--kind",
            "imu",
            "--dataset",
            "ds",
            "--out",
            "m.fsnn",
            "--epochs",
            "0",
        ],
        d,
    );
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let report = KeyValues::read(&d.join("m.fsnn.report.txt")).unwrap();
    let acc: f64 = report.require("accuracy").unwrap();
    assert!(acc < 0.35, "{acc}");
    assert_eq!(report.get("train.epochs"), Some("0"));

    let out = fallsense(
        &["evaluate", "--kind", "imu", "--dataset", "ds", "--weights", "m.fsnn"],
        d,
    );
    assert_eq!(code(&out), 0);
    let eval = KeyValues::parse(&String::from_utf8(out.stdout).unwrap()).unwrap();
    assert_eq!(eval.get("accuracy"), report.get("accuracy"));

    // the stored checksum is the one the report names
    let bytes = read(d.join("m.fsnn"));
    let stored = u32::from_le_bytes(bytes[bytes.len() - 4..].try_into().unwrap());
    assert_eq!(report.get("weights.crc32"), Some(format!("{stored:08x}").as_str()));
}

#[test]
fn training_with_a_fixed_seed_is_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(code(&fallsense(&["generate", "--classes", "20", "--out", "ds"], d)), 0);
    for name in ["a.fsnn", "b.fsnn"] {
        let out = fallsense(
            &[
                "train",
                "--kind",
                "csi",
                "--dataset",
                "ds",
                "--out",
                name,
                "--epochs",
                "3",
                "--seed",
                "4",
            ],
            d,
        );
        assert_eq!(code(&out), 0);
    }
    assert_eq!(read(d.join("a.fsnn")), read(d.join("b.fsnn")));
    let out = fallsense(
        &[
            "train",
            "--kind",
            "csi",
            "--dataset",
            "ds",
            "--out",
            "c.fsnn",
            "--epochs",
            "3",
            "--seed",
            "5",
        ],
        d,
    );
    assert_eq!(code(&out), 0);
    assert_ne!(read(d.join("a.fsnn")), read(d.join("c.fsnn")));
}

#[test]
fn replay_matches_in_memory_session() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&fallsense(
            &["generate", "--scenario", "throw", "--seed", "2", "--out", "sc"],
            d
        )),
        0
    );
    let args = [
        "replay",
        "--imu",
        "sc/imu.csv",
        "--csi",
        "sc/csi.csv",
        "--mlp",
        &t.path("mlp.fsnn"),
        "--cnn",
        &t.path("cnn.fsnn"),
        "--out",
        "v1.log",
        "--series",
        "series.csv",
    ];
    let out = fallsense(&args, d);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let summary = String::from_utf8(out.stdout).unwrap();
    assert!(summary.starts_with("NONE="), "{summary}");

    let sc = gen_scenario(ScenarioKind::Throw, 2);
    let mlp = load_mlp(t.path("mlp.fsnn"), None).unwrap();
    let cnn = load_cnn(t.path("cnn.fsnn")).unwrap();
    let verdicts = run_session(&sc.imu, &sc.csi, &mlp, &cnn, &FusionConfig::default()).unwrap();
    let mut want = Vec::new();
    formats::write_verdicts(&mut want, &verdicts, 0).unwrap();
    assert_eq!(read(d.join("v1.log")), want);

    let log = String::from_utf8(want).unwrap();
    assert_eq!(log.lines().next(), Some(formats::VERDICT_HEADER));
    assert_eq!(log.lines().count(), verdicts.len() + 1);
    let series = String::from_utf8(read(d.join("series.csv"))).unwrap();
    assert_eq!(series.lines().count(), sc.imu.len() + 1);

    let mut again = args;
    again[10] = "v2.log";
    assert_eq!(code(&fallsense(&again, d)), 0);
    assert_eq!(read(d.join("v1.log")), read(d.join("v2.log")));

    // paths from a config file, threshold from a flag
    std::fs::write(
        d.join("run.conf"),
        format!(
            "paths.imu = sc/imu.csv\npaths.csi = sc/csi.csv\npaths.mlp = {}\npaths.cnn = {}\npaths.out = v3.log\n",
            t.path("mlp.fsnn"),
            t.path("cnn.fsnn")
        ),
    )
    .unwrap();
    let out = fallsense(&["--config", "run.conf", "replay", "--vote-threshold", "20"], d);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8(out.stdout).unwrap().contains("EMERGENCY=0"));
}

#[test]
fn bad_inputs_are_data_errors() {
    let t = trained();
    let dir = tempfile::tempdir().unwrap();
    let d = dir.path();
    assert_eq!(
        code(&fallsense(
            &["generate", "--scenario", "daily", "--seed", "2", "--out", "sc"],
            d
        )),
        0
    );
    let replay = |imu: &str, csi: &str, mlp: &str| {
        fallsense(
            &[
                "replay",
                "--imu",
                imu,
                "--csi",
                csi,
                "--mlp",
                mlp,
                "--cnn",
                &t.path("cnn.fsnn"),
                "--out",
                "v.log",
            ],
            d,
        )
    };
    let mlp = t.path("mlp.fsnn");
    assert_eq!(code(&replay("missing.csv", "sc/csi.csv", &mlp)), 2);
    assert_eq!(code(&replay("sc/csi.csv", "sc/csi.csv", &mlp)), 2);

    let csi = std::fs::read_to_string(d.join("sc/csi.csv")).unwrap();
    let short: Vec<&str> = csi.lines().take(11).collect();
    std::fs::write(d.join("short.csv"), short.join("\n")).unwrap();
    let out = replay("sc/imu.csv", "short.csv", &mlp);
    assert_eq!(code(&out), 2);
    assert!(String::from_utf8_lossy(&out.stderr).contains("overlap"));

    let mut bytes = read(&mlp);
    bytes[40] ^= 0xff;
    std::fs::write(d.join("broken.fsnn"), bytes).unwrap();
    assert_eq!(code(&replay("sc/imu.csv", "sc/csi.csv", "broken.fsnn")), 2);
    assert_eq!(code(&replay("sc/imu.csv", "sc/csi.csv", &t.path("cnn.fsnn"))), 2);

    assert_eq!(
        code(&fallsense(
            &["train", "--kind", "imu", "--dataset", "sc", "--out", "m.fsnn"],
            d
        )),
        2
    );
}
