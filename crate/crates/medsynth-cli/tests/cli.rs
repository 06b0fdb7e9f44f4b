use std::io::Write;
use std::path::PathBuf;
use std::process::{Command, Output, Stdio};

fn problem(name: &str) -> PathBuf {
    PathBuf::from(env!("CARGO_MANIFEST_DIR")).join("../../problems").join(name)
}

fn medsynth(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_medsynth"))
        .args(args)
        .env_remove("MEDSYNTH_SEED")
        .output()
        .unwrap()
}

fn with_stdin(args: &[&str], input: &[u8]) -> Output {
    let mut child = Command::new(env!("CARGO_BIN_EXE_medsynth"))
        .args(args)
        .env_remove("MEDSYNTH_SEED")
        .stdin(Stdio::piped())
        .stdout(Stdio::piped())
        .stderr(Stdio::piped())
        .spawn()
        .unwrap();
    child.stdin.take().unwrap().write_all(input).unwrap();
    child.wait_with_output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).unwrap()
}

fn path(name: &str) -> String {
    problem(name).to_str().unwrap().to_string()
}

#[test]
fn receive_then_forbid_exits_one() {
    let out = medsynth(&["solve", &path("forbid_then_receive.msl")]);
    assert_eq!(code(&out), 1);
    assert_eq!(stdout(&out).trim(), "UNSAT");
}

#[test]
fn verdicts_of_the_small_problems() {
    for (name, expected) in [
        ("forbid_before_send.msl", 0),
        ("forbid_then_receive.msl", 1),
        ("key_then_forbid.msl", 1),
        ("key_then_receive.msl", 0),
    ] {
        for mode in ["reduction", "reference"] {
            let out = medsynth(&["solve", &path(name), "--mode", mode]);
            assert_eq!(code(&out), expected, "{name} in {mode} mode");
        }
    }
}

#[test]
fn solve_json_round_trips_through_verify() {
    for name in ["forbid_before_send.msl", "key_then_receive.msl"] {
        let solved = medsynth(&["solve", &path(name), "--json"]);
        assert_eq!(code(&solved), 0);
        let doc: serde_json::Value = serde_json::from_slice(&solved.stdout).unwrap();
        assert_eq!(doc["schema"], 1);
        assert_eq!(doc["verdict"], "SAT");
        let verified = with_stdin(&["verify", &path(name), "--solution", "-"], &solved.stdout);
        assert_eq!(code(&verified), 0, "{}", stdout(&verified));
        let replayed = with_stdin(&["check-derivation", &path(name), "--derivation", "-"], &solved.stdout);
        assert_eq!(code(&replayed), 0, "{}", stdout(&replayed));
    }
}

#[test]
fn tampered_solution_names_the_violated_constraint() {
    let out = medsynth(&[
        "verify",
        &path("forbid_before_send.msl"),
        "--solution",
        r#"{"X":"nonce:n"}"#,
        "--json",
    ]);
    assert_eq!(code(&out), 1);
    let doc: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(doc["verdict"], "invalid");
    assert_eq!(doc["first_violation"], 1);
    let ok = medsynth(&["verify", &path("forbid_before_send.msl"), "--solution", r#"{"X":"a"}"#]);
    assert_eq!(code(&ok), 0);
}

#[test]
fn tampered_derivation_is_rejected() {
    let solved = medsynth(&["solve", &path("key_then_receive.msl"), "--json"]);
    let mut doc: serde_json::Value = serde_json::from_slice(&solved.stdout).unwrap();
    let ops = doc["mediator"].as_array_mut().unwrap();
    let last_apply = ops.iter().rposition(|op| op["op"] == "apply").unwrap();
    ops[last_apply]["term"] = serde_json::Value::String("b".into());
    let out = medsynth(&[
        "check-derivation",
        &path("key_then_receive.msl"),
        "--derivation",
        &doc.to_string(),
    ]);
    assert_eq!(code(&out), 1, "{}", stdout(&out));
}

#[test]
fn derivable_answers_with_a_proof() {
    let file = path("forbid_before_send.msl");
    let yes = medsynth(&["derivable", &file, "--knowledge", "senc(pair(a,b),k), k", "--goal", "b", "--proof", "--json"]);
    assert_eq!(code(&yes), 0);
    let doc: serde_json::Value = serde_json::from_slice(&yes.stdout).unwrap();
    assert_eq!(doc["verdict"], "YES");
    assert_eq!(doc["proof"].as_array().unwrap().len(), 4);
    let no = medsynth(&["derivable", &file, "--knowledge", "senc(pair(a,b),k)", "--goal", "b"]);
    assert_eq!(code(&no), 1);
    assert_eq!(stdout(&no).trim(), "NO");
}

#[test]
fn usage_and_parse_errors_exit_two() {
    assert_eq!(code(&medsynth(&["solve"])), 2);
    assert_eq!(code(&medsynth(&["solve", "/nonexistent.msl"])), 2);
    let dir = std::env::temp_dir().join(format!("medsynth-cli-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let bad = dir.join("bad.msl");
    std::fs::write(&bad, "system S { vars x; compose pair(x,x); }\nconstraints { ? pair(a; }\n").unwrap();
    let out = medsynth(&["solve", bad.to_str().unwrap()]);
    assert_eq!(code(&out), 2);
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("2:"), "{err}");
    let seeded = Command::new(env!("CARGO_BIN_EXE_medsynth"))
        .args(["solve", &path("forbid_before_send.msl")])
        .env("MEDSYNTH_SEED", "not-a-number")
        .output()
        .unwrap();
    assert_eq!(code(&seeded), 2);
}

#[test]
fn seed_from_the_environment_is_reproducible() {
    let run = || {
        Command::new(env!("CARGO_BIN_EXE_medsynth"))
            .args(["solve", &path("key_then_receive.msl"), "--json", "--seed", "1"])
            .env("MEDSYNTH_SEED", "7")
            .output()
            .unwrap()
    };
    let (a, b) = (run(), run());
    assert_eq!(code(&a), 0);
    assert_eq!(a.stdout, b.stdout);
}

#[test]
fn lop_matches_the_golden_files() {
    let out = medsynth(&["solve", &path("lop.msl"), "--json"]);
    assert_eq!(code(&out), 0);
    let golden = std::fs::read_to_string(problem("golden/lop.json")).unwrap();
    assert_eq!(stdout(&out), golden);
    let verified = medsynth(&["verify", &path("lop.msl"), "--solution", &path("golden/lop.json")]);
    assert_eq!(code(&verified), 0);
    let replayed = medsynth(&["check-derivation", &path("lop.msl"), "--derivation", &path("golden/lop.json")]);
    assert_eq!(code(&replayed), 0);
    let text = medsynth(&["orchestrate", &path("lop.msl")]);
    let program: String = stdout(&text)
        .lines()
        .skip_while(|l| *l != "mediator:")
        .skip(1)
        .map(|l| format!("{}\n", l.strip_prefix("  ").unwrap_or(l)))
        .collect();
    let golden = std::fs::read_to_string(problem("golden/lop.mediator")).unwrap();
    assert_eq!(program, golden);
}
