use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn fixture() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../core/tests/fixtures/meetings10/manifest.jsonl")
}

fn audit(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_collage-audit"))
        .args(args)
        .output()
        .unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn s(p: &Path) -> &str {
    p.to_str().unwrap()
}

#[test]
fn ingest_counts_posts() {
    let o = audit(&["ingest", s(&fixture())]);
    assert!(o.status.success(), "{o:?}");
    let out = stdout(&o);
    assert!(out.contains("13 posts (twitter 6, instagram 6, other 1)"), "{out}");
    assert!(out.contains("0 image files missing"), "{out}");
}

#[test]
fn ingest_bad_manifest_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let m = dir.path().join("m.jsonl");
    std::fs::write(&m, "{\"post_id\": \"a\"}\n").unwrap();
    assert_eq!(audit(&["ingest", s(&m)]).status.code(), Some(2));
    assert_eq!(
        audit(&["ingest", s(&dir.path().join("absent.jsonl"))]).status.code(),
        Some(2)
    );
}

#[test]
fn run_then_report_and_graph_export() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = audit(&["run", "--manifest", s(&fixture()), "--output-dir", s(&out)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(
        stdout(&o).contains("kept 10 after dedup (hash 1, embedding 1)"),
        "{}",
        stdout(&o)
    );
    for f in ["report.json", "edges.csv", "dedup.json", "clusters.json"] {
        assert!(out.join(f).is_file(), "{f} missing");
    }

    let o = audit(&["report", s(&out), "--json"]);
    assert!(o.status.success());
    assert_eq!(stdout(&o), std::fs::read_to_string(out.join("report.json")).unwrap());

    let o = audit(&["report", s(&out)]);
    assert!(
        stdout(&o).contains("largest component        15 nodes, 20 edges"),
        "{}",
        stdout(&o)
    );

    let edges = dir.path().join("rebuilt.csv");
    let o = audit(&["graph-export", s(&out.join("clusters.json")), "-o", s(&edges)]);
    assert!(o.status.success(), "{o:?}");
    assert_eq!(
        std::fs::read(&edges).unwrap(),
        std::fs::read(out.join("edges.csv")).unwrap()
    );
}

#[test]
fn config_file_with_flag_override() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("audit.toml");
    std::fs::write(
        &cfg,
        format!(
            "manifest = \"{}\"\noutput-dir = \"out\"\ndedup = false\nface-link-threshold = 0.3\n",
            fixture().display()
        ),
    )
    .unwrap();
    let o = audit(&["run", "--config", s(&cfg)]);
    assert!(o.status.success(), "{}", String::from_utf8_lossy(&o.stderr));
    assert!(stdout(&o).contains("kept 12 after dedup"), "{}", stdout(&o));
    // relative to the config file
    assert!(dir.path().join("out/report.json").is_file());

    let out2 = dir.path().join("out2");
    let o = audit(&[
        "run",
        "--config",
        s(&cfg),
        "--output-dir",
        s(&out2),
        "--hamming-threshold",
        "1.2",
        "--no-face-linkage",
    ]);
    assert!(o.status.success());
    // dedup = false from the file still holds
    assert!(stdout(&o).contains("kept 12 after dedup"), "{}", stdout(&o));
    let report = std::fs::read_to_string(out2.join("report.json")).unwrap();
    assert!(report.contains("\"repeated_face_identities\": 0,"), "{report}");
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let m = fixture();
    let bad_threshold = audit(&[
        "run",
        "--manifest",
        s(&m),
        "--output-dir",
        s(&out),
        "--hamming-threshold=-1",
    ]);
    assert_eq!(bad_threshold.status.code(), Some(2));

    let cfg = dir.path().join("bad.toml");
    std::fs::write(&cfg, "hamming = 2\n").unwrap();
    assert_eq!(audit(&["run", "--config", s(&cfg)]).status.code(), Some(2));

    assert_eq!(audit(&["run", "--output-dir", s(&out)]).status.code(), Some(2));
    assert_eq!(
        audit(&[
            "run",
            "--manifest",
            s(&m),
            "--output-dir",
            s(&out),
            "--backend",
            "cloud"
        ])
        .status
        .code(),
        Some(2)
    );
    assert_eq!(audit(&["run", "--no-such-flag"]).status.code(), Some(2));
}

#[test]
fn stage_failure_exits_1() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    std::fs::write(&blocker, "").unwrap();
    // output directory cannot be created under a regular file
    let o = audit(&[
        "run",
        "--manifest",
        s(&fixture()),
        "--output-dir",
        s(&blocker.join("out")),
    ]);
    assert_eq!(o.status.code(), Some(1), "{o:?}");
}
