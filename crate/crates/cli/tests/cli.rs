use std::net::TcpListener;
use std::path::PathBuf;
use std::process::{Child, Command, Output, Stdio};

use tempfile::TempDir;

const TOY_Q: &str = "2305843009213693951";

struct Env {
    dir: TempDir,
    backend: Vec<&'static str>,
}

impl Env {
    fn new(backend: &[&'static str]) -> Self {
        Env {
            dir: tempfile::tempdir().unwrap(),
            backend: backend.to_vec(),
        }
    }

    fn toy() -> Self {
        Self::new(&["--backend", "toy", "--toy-q", TOY_Q])
    }

    fn curve() -> Self {
        Self::new(&[])
    }

    fn path(&self, name: &str) -> PathBuf {
        self.dir.path().join(name)
    }

    fn cmd(&self, args: &[&str]) -> Command {
        let mut c = Command::new(env!("CARGO_BIN_EXE_chamauth"));
        c.current_dir(self.dir.path())
            .env("CHAMAUTH_DATA_DIR", self.path("idp"))
            .args(&self.backend)
            .args(args);
        c
    }

    fn run(&self, args: &[&str]) -> Output {
        self.cmd(args).output().unwrap()
    }

    fn ok(&self, args: &[&str]) -> String {
        let out = self.run(args);
        assert!(
            out.status.success(),
            "{args:?} failed: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        String::from_utf8(out.stdout).unwrap()
    }

    fn spawn(&self, args: &[&str]) -> Child {
        self.cmd(args)
            .stdout(Stdio::piped())
            .stderr(Stdio::piped())
            .spawn()
            .unwrap()
    }

    /// Provider plus two players, `alice` and `bob`, each with key, token,
    /// template and virtual identity.
    fn populate(&self) {
        self.ok(&["idp", "init"]);
        for (i, who) in ["alice", "bob"].iter().enumerate() {
            let key = format!("{who}.key");
            let tpl = format!("{who}.tpl");
            let mit = format!("{who}.mit");
            let subject = (i + 1).to_string();
            self.ok(&["keygen", "--out", &key, "--seed", &subject]
                [..if self.backend.is_empty() { 3 } else { 5 }]);
            self.ok(&["bio", "template", "--subject", &subject, "--out", &tpl]);
            self.ok(&[
                "idp",
                "register",
                "--real-id",
                &format!("{who}@example"),
                "--anon-id",
                &format!("anon-{who}"),
                "--pubkey",
                &format!("{who}.pub"),
                "--template",
                &tpl,
                "--out",
                &mit,
            ]);
            self.ok(&[
                "avatar",
                "create",
                "--key",
                &key,
                "--mit",
                &mit,
                "--name",
                who,
                "--out",
                &format!("{who}.vid"),
            ]);
        }
    }
}

fn free_addr() -> String {
    let l = TcpListener::bind("127.0.0.1:0").unwrap();
    l.local_addr().unwrap().to_string()
}

fn field<'a>(stdout: &'a str, key: &str) -> Option<&'a str> {
    stdout
        .lines()
        .find_map(|l| l.strip_prefix(key)?.strip_prefix('='))
}

fn creds(who: &str) -> Vec<String> {
    ["key", "mit", "vid", "template"]
        .iter()
        .zip(["key", "mit", "vid", "tpl"])
        .flat_map(|(flag, ext)| [format!("--{flag}"), format!("{who}.{ext}")])
        .collect()
}

fn session(
    env: &Env,
    mode: &str,
    a: (&str, &str),
    b: Option<(&str, &str)>,
    extra_b: &[&str],
) -> (Output, Output) {
    let addr = free_addr();
    let mut b_args: Vec<String> = [
        "session", "run", "--role", "b", "--mode", mode, "--listen", &addr,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    if let Some((mit_of, vid_of)) = b {
        b_args.extend(creds(mit_of));
        let i = b_args.len() - 3;
        b_args[i] = format!("{vid_of}.vid");
    }
    b_args.extend(extra_b.iter().map(|s| s.to_string()));
    let b_ref: Vec<&str> = b_args.iter().map(String::as_str).collect();
    let child = env.spawn(&b_ref);

    let mut a_args: Vec<String> = [
        "session",
        "run",
        "--role",
        "a",
        "--mode",
        mode,
        "--connect",
        &addr,
    ]
    .iter()
    .map(|s| s.to_string())
    .collect();
    a_args.extend(creds(a.0));
    let i = a_args.len() - 3;
    a_args[i] = format!("{}.vid", a.1);
    let a_ref: Vec<&str> = a_args.iter().map(String::as_str).collect();
    let out_a = env.run(&a_ref);
    let out_b = child.wait_with_output().unwrap();
    (out_a, out_b)
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

#[test]
fn bench_tables_are_exact() {
    let env = Env::curve();
    let out = env.ok(&["bench", "--table2", "--table3", "--seed", "5"]);
    let expected = "\
group=bls12-381
table2 algorithm=hash cost=2 E1 + 1 M1
table2 algorithm=check cost=1 M1 + 2 P
table2 algorithm=sign cost=1 E1 + 1 M1
table2 algorithm=verify cost=2 M1 + 4 P
table3 party=a phase=round1 cost=--
table3 party=a phase=round2 cost=3 M1 + 4 P + 1 E1
table3 party=a phase=session cost=2 M1 + 4 P + 1 E1
table3 party=a phase=total cost=5 M1 + 8 P + 2 E1
table3 party=b phase=round1 cost=2 M1 + 4 P
table3 party=b phase=round2 cost=3 M1 + 4 P + 2 E1
table3 party=b phase=session cost=1 E1
table3 party=b phase=total cost=5 M1 + 8 P + 3 E1
";
    assert_eq!(out, expected);
}

#[test]
fn bench_timing_lines() {
    let env = Env::toy();
    let out = env.ok(&["bench", "--timing", "--iterations", "2", "--seed", "1"]);
    for op in ["e1", "m1", "pairing", "hash", "sign", "verify"] {
        assert!(out.contains(&format!("timing op={op} mean_ms=")), "{out}");
    }
    for step in ["match", "extract", "verify"] {
        assert!(
            out.contains(&format!("timing step={step} mean_ms=")),
            "{out}"
        );
    }
    assert!(out.contains("soft sign_verify_ms="));
}

#[test]
fn usage_errors_exit_nonzero() {
    let env = Env::curve();
    let missing_q = env.run(&["--backend", "toy", "bench"]);
    assert_eq!(missing_q.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&missing_q.stderr).contains("--toy-q"));

    let stray_q = env.run(&["--toy-q", "13", "bench"]);
    assert_eq!(stray_q.status.code(), Some(1));

    let seeded = env.run(&["keygen", "--out", "k.key", "--seed", "1"]);
    assert_eq!(seeded.status.code(), Some(1));
    assert!(!env.path("k.key").exists());

    let noise = env.run(&["--noise", "0.5", "bio", "simulate"]);
    assert_eq!(noise.status.code(), Some(1));

    // clap reports malformed invocations with its own code.
    assert_eq!(env.run(&["session", "run"]).status.code(), Some(2));
    assert_eq!(
        env.run(&["bench", "--iterations", "0"]).status.code(),
        Some(2)
    );
}

#[test]
fn keygen_register_pipeline() {
    let env = Env::toy();
    env.populate();
    for f in [
        "alice.key",
        "alice.pub",
        "alice.mit",
        "alice.vid",
        "bob.tpl",
    ] {
        assert!(env.path(f).exists(), "{f}");
    }
    let show = env.ok(&["idp", "show"]);
    assert!(show.contains("entries=2"));
    assert!(show.contains("anon_id=anon-alice real_id=alice@example idp_sig_valid=true"));
    assert!(show.ends_with("chain=ok\n"));

    // An anonymous id may be registered once.
    let dup = env.run(&[
        "idp",
        "register",
        "--real-id",
        "eve",
        "--anon-id",
        "anon-alice",
        "--pubkey",
        "bob.pub",
        "--template",
        "bob.tpl",
    ]);
    assert!(!dup.status.success());

    // Someone else's key cannot make an avatar for a token.
    let wrong = env.run(&[
        "avatar",
        "create",
        "--key",
        "bob.key",
        "--mit",
        "alice.mit",
        "--name",
        "x",
        "--out",
        "x.vid",
    ]);
    assert!(!wrong.status.success());

    // init refuses to clobber without --force.
    assert!(!env.run(&["idp", "init"]).status.success());
}

#[test]
fn seeded_toy_runs_are_reproducible() {
    let a = Env::toy();
    let b = Env::toy();
    let args = ["--seed", "9", "session", "demo", "--runs", "2"];
    assert_eq!(a.ok(&args), b.ok(&args));
    assert_eq!(
        a.ok(&["--seed", "4", "keygen", "--out", "k.key"]),
        b.ok(&["--seed", "4", "keygen", "--out", "k.key"])
    );
    assert_eq!(
        std::fs::read(a.path("k.key")).unwrap(),
        std::fs::read(b.path("k.key")).unwrap()
    );
}

#[test]
fn data_dir_tied_to_backend() {
    let env = Env::toy();
    env.ok(&["idp", "init"]);
    let mut c = Command::new(env!("CARGO_BIN_EXE_chamauth"));
    let out = c
        .env("CHAMAUTH_DATA_DIR", env.path("idp"))
        .args(["idp", "show"])
        .output()
        .unwrap();
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("provider"));
}

#[test]
fn two_party_over_tcp_agrees_on_key_and_traces() {
    let env = Env::curve();
    env.populate();
    let (a, b) = session(
        &env,
        "two-party",
        ("alice", "alice"),
        Some(("bob", "bob")),
        &[
            "--retain",
            "b.req",
            "--transcript",
            "b.frames",
            "--reporter",
            "bob",
        ],
    );
    let (sa, sb) = (stdout(&a), stdout(&b));
    assert!(
        a.status.success(),
        "{sa}\n{}",
        String::from_utf8_lossy(&a.stderr)
    );
    assert!(
        b.status.success(),
        "{sb}\n{}",
        String::from_utf8_lossy(&b.stderr)
    );
    let fa = field(&sa, "session_key_fingerprint").unwrap();
    let fb = field(&sb, "session_key_fingerprint").unwrap();
    assert_eq!(fa, fb);
    assert_eq!(fa.len(), 16);
    let frames = std::fs::read_to_string(env.path("b.frames")).unwrap();
    assert_eq!(frames.lines().count(), 6);

    let trace = env.run(&["trace", "--request", "b.req"]);
    assert!(trace.status.success());
    let v: serde_json::Value = serde_json::from_slice(&trace.stdout).unwrap();
    assert_eq!(v["reason"], "Disclosed");
    assert_eq!(v["disclosed"], true);
    assert_eq!(v["real_id"], "alice@example");
    assert_eq!(v["real_id_hex"], hex_of("alice@example"));
    assert_eq!(v["reporter"], "bob");
}

fn hex_of(s: &str) -> String {
    s.bytes().map(|b| format!("{b:02x}")).collect()
}

#[test]
fn one_party_accepts_and_rejects() {
    let env = Env::toy();
    env.populate();
    let (a, b) = session(
        &env,
        "one-party",
        ("alice", "alice"),
        None,
        &["--retain", "v.req"],
    );
    assert!(a.status.success(), "{}", String::from_utf8_lossy(&a.stderr));
    assert!(b.status.success(), "{}", String::from_utf8_lossy(&b.stderr));
    assert_eq!(field(&stdout(&b), "accepted"), Some("true"));
    assert_eq!(field(&stdout(&b), "session_key_fingerprint"), None);
    assert!(env.path("v.req").exists());

    let (a, b) = session(
        &env,
        "one-party",
        ("alice", "bob"),
        None,
        &["--retain", "w.req"],
    );
    assert_eq!(a.status.code(), Some(1));
    assert_eq!(b.status.code(), Some(1));
    assert_eq!(field(&stdout(&b), "reason"), Some("bad-vid"));
    assert_eq!(field(&stdout(&a), "aborted_by_peer"), Some("true"));
    assert!(!env.path("w.req").exists());
}

#[test]
fn tampered_trace_request_is_refused() {
    let env = Env::toy();
    env.populate();
    let (_, b) = session(
        &env,
        "one-party",
        ("bob", "bob"),
        None,
        &["--retain", "v.req"],
    );
    assert!(b.status.success());

    let mut bytes = std::fs::read(env.path("v.req")).unwrap();
    let last = bytes.len() - "anonymous".len() - 5;
    bytes[last] ^= 1; // inside the challenge nonce
    std::fs::write(env.path("bad.req"), &bytes).unwrap();
    let out = env.run(&["trace", "--request", "bad.req"]);
    assert_eq!(out.status.code(), Some(2));
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["disclosed"], false);
    assert_eq!(v["reason"], "BadFreshness");
    assert!(v["real_id"].is_null());

    std::fs::write(env.path("junk.req"), b"not a bundle").unwrap();
    assert_eq!(
        env.run(&["trace", "--request", "junk.req"]).status.code(),
        Some(1)
    );
}

#[test]
fn bio_simulate_reports_rates() {
    let env = Env::toy();
    let out = env.ok(&[
        "--seed",
        "3",
        "bio",
        "simulate",
        "--trials",
        "50",
        "--thresholds",
        "0.3,0.4",
    ]);
    assert!(out.starts_with("trials=50 noise=0.10 seed=3\n"));
    assert_eq!(out.matches("rate threshold=").count(), 2);
    assert_eq!(field(&out, "watermark_roundtrip_failures"), Some("0"));
}
