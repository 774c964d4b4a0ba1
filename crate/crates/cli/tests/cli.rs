use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn bin() -> Command {
    Command::new(env!("CARGO_BIN_EXE_semimarkov"))
}

fn run(dir: &Path, args: &[&str]) -> Output {
    bin().current_dir(dir).args(args).output().unwrap()
}

fn ok(dir: &Path, args: &[&str]) -> String {
    let out = run(dir, args);
    assert!(
        out.status.success(),
        "{args:?} exited with {:?}: {}",
        out.status.code(),
        String::from_utf8_lossy(&out.stderr)
    );
    String::from_utf8(out.stdout).unwrap()
}

fn code(dir: &Path, args: &[&str]) -> i32 {
    run(dir, args).status.code().unwrap()
}

/// Three sessions of ticks, one every 20 s, on a random walk with a 0.01 tick.
fn write_ticks(path: &Path, flat: bool) {
    let mut csv = String::from("timestamp,price\n");
    let mut price = 2000i64;
    let mut state = 12345u64;
    for day in 4..7 {
        for k in 0..(8 * 180 + 81) {
            state = state.wrapping_mul(6364136223846793005).wrapping_add(1442695040888963407);
            if !flat {
                price += ((state >> 33) % 5) as i64 - 2;
            }
            let secs = 9 * 3600 + 5 + 20 * k;
            csv.push_str(&format!(
                "2024-03-{day:02} {:02}:{:02}:{:02},{}.{:02}\n",
                secs / 3600,
                secs / 60 % 60,
                secs % 60,
                price / 100,
                price % 100
            ));
        }
    }
    fs::write(path, csv).unwrap();
}

#[test]
fn help_lists_every_subcommand() {
    let out = bin().arg("--help").output().unwrap();
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    for cmd in ["ingest", "discretize", "estimate", "index", "estimate-indexed", "simulate", "acf", "sweep", "generate", "run"] {
        assert!(text.contains(cmd), "{cmd} missing from help");
    }
}

#[test]
fn stage_by_stage_pipeline() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    write_ticks(&d.join("ticks.csv"), false);

    ok(d, &["ingest", "--input", "ticks.csv", "--symbol", "TST", "--out", "prices.txt"]);
    assert!(fs::read_to_string(d.join("prices.txt")).unwrap().contains("TST"));
    ok(d, &["discretize", "--prices", "prices.txt", "--states", "5", "--out", "states.txt"]);
    ok(d, &["discretize", "--prices", "prices.txt", "--mode", "fixed-delta", "--delta", "0.0005", "--out", "fixed.txt"]);
    ok(d, &["estimate", "--states", "states.txt", "--fallback", "--out", "kernel.txt"]);
    ok(d, &["index", "--kernel-sample", "states.txt", "--kind", "ewma", "--lambda", "0.97", "--out", "index.txt"]);
    ok(d, &["index", "--kernel-sample", "states.txt", "--kind", "moving-average", "--m", "10", "--out", "ma.txt"]);
    ok(
        d,
        &["estimate-indexed", "--states", "states.txt", "--index", "index.txt", "--levels", "3", "--fallback", "--out", "ikernel.txt"],
    );

    ok(d, &["simulate", "--kernel", "kernel.txt", "--horizon", "2000", "--reps", "2", "--out", "sim"]);
    for f in ["rep-0000.txt", "rep-0001.txt", "manifest.json"] {
        assert!(d.join("sim").join(f).exists(), "{f}");
    }
    let first = fs::read(d.join("sim/rep-0000.txt")).unwrap();
    ok(d, &["simulate", "--kernel", "kernel.txt", "--horizon", "2000", "--reps", "1", "--out", "again"]);
    assert_eq!(fs::read(d.join("again/rep-0000.txt")).unwrap(), first);

    fs::write(d.join("icfg.toml"), "kind = \"ewma\"\nlambda = 0.9\n").unwrap();
    ok(d, &["simulate", "--index-kernel", "ikernel.txt", "--horizon", "2000", "--burn-in", "100", "--out", "isim"]);
    ok(
        d,
        &["simulate", "--index-kernel", "ikernel.txt", "--index-cfg", "icfg.toml", "--horizon", "2000", "--out", "isim2"],
    );
    let manifest = fs::read_to_string(d.join("isim/manifest.json")).unwrap();
    assert!(manifest.contains("chacha8-stream-per-replication"));

    ok(d, &["acf", "--series", "states.txt", "--max-lag", "20", "--out", "acf.csv"]);
    ok(d, &["acf", "--series", "sim/rep-0000.txt", "--max-lag", "20", "--returns", "--exclude-day-boundaries", "--out", "acf-r.csv"]);
    let acf = fs::read_to_string(d.join("acf.csv")).unwrap();
    assert!(acf.contains("lag,value"));
    assert_eq!(acf.lines().filter(|l| l.chars().next().is_some_and(|c| c.is_ascii_digit())).count(), 20);

    // The index must belong to the series it is paired with.
    assert_eq!(
        code(d, &["estimate-indexed", "--states", "fixed.txt", "--index", "index.txt", "--out", "x.txt"]),
        2
    );
}

#[test]
fn generate_and_sweep() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    ok(d, &["generate", "--horizon", "20000", "--seed", "3", "--out", "synth.txt"]);
    ok(
        d,
        &["sweep", "--param", "lambda", "--grid", "0.9,0.97,1.0", "--data", "synth.txt", "--reps", "2", "--burn-in", "100", "--max-lag", "10", "--out", "lambda.csv"],
    );
    let csv = fs::read_to_string(d.join("lambda.csv")).unwrap();
    assert!(csv.contains("# parameter=lambda"));
    assert!(csv.contains("param,mse,seed,replications,error"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("0.9") || l.starts_with("1,")).count(), 3);

    ok(
        d,
        &["sweep", "--param", "m", "--grid", "5:15:5", "--data", "synth.txt", "--reps", "1", "--burn-in", "100", "--max-lag", "10", "--out", "m.csv"],
    );
    assert!(fs::read_to_string(d.join("m.csv")).unwrap().contains("# parameter=m"));
    assert_eq!(
        code(d, &["sweep", "--param", "m", "--grid", "0.5,2", "--data", "synth.txt", "--out", "bad.csv"]),
        2
    );
}

#[test]
fn run_with_config_and_overrides() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    let shipped = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs/synthetic-wismc.toml");
    let text = fs::read_to_string(shipped).unwrap();
    let text = text
        .replace("horizon = 500000", "horizon = 20000")
        .replace("replications = 10", "replications = 2")
        .replace("burn_in = 1000", "burn_in = 100")
        .replace("runs/synthetic-wismc", "out");
    fs::write(d.join("run.toml"), text).unwrap();
    let printed = ok(d, &["run", "--config", "run.toml"]);
    assert_eq!(printed.lines().count(), 6, "{printed}");
    assert!(d.join("out/manifest.json").exists());

    let out = ok(
        d,
        &["run", "--config", "run.toml", "--out-dir", "other", "--m", "10", "--reps", "1", "--horizon", "5000", "--stages", "generate,estimate,index,estimate-indexed,simulate"],
    );
    assert_eq!(out.lines().count(), 5, "{out}");
    assert!(out.lines().all(|l| l.split('\t').count() == 3));
    assert!(!d.join("other/acf.csv").exists());
    assert_ne!(out.lines().last(), printed.lines().nth(4));

    let again = ok(d, &["run", "--config", "run.toml", "--out-dir", "third"]);
    assert_eq!(again, printed);

    assert_eq!(code(d, &["run", "--config", "run.toml", "--stages", "bogus"]), 2);
    // ismc rejects the λ left over from the config.
    assert_eq!(code(d, &["run", "--config", "run.toml", "--out-dir", "t", "--model", "ismc"]), 2);
    // smc has nothing to sweep.
    let failed = run(d, &["run", "--config", "run.toml", "--out-dir", "t2", "--model", "smc", "--stages", "generate,sweep"]);
    assert_eq!(failed.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&failed.stderr).contains("sweep"));
}

#[test]
fn exit_codes() {
    let tmp = tempfile::tempdir().unwrap();
    let d = tmp.path();
    // Usage errors from argument parsing.
    assert_eq!(code(d, &["estimate"]), 2);
    assert_eq!(code(d, &["bogus"]), 2);
    assert_eq!(code(d, &["simulate", "--horizon", "10", "--out", "x"]), 2);
    // Missing or malformed input.
    assert_eq!(code(d, &["ingest", "--input", "nope.csv", "--out", "p.txt"]), 3);
    fs::write(d.join("empty.csv"), "timestamp,price\n").unwrap();
    assert_eq!(code(d, &["ingest", "--input", "empty.csv", "--out", "p.txt"]), 3);
    fs::write(d.join("junk.txt"), "# semimarkov states v99\n").unwrap();
    assert_eq!(code(d, &["estimate", "--states", "junk.txt", "--out", "k.txt"]), 3);
    assert_eq!(code(d, &["run", "--config", "missing.toml"]), 3);
    // A flat price path cannot be discretized.
    write_ticks(&d.join("flat.csv"), true);
    ok(d, &["ingest", "--input", "flat.csv", "--out", "flat.txt"]);
    let out = run(d, &["discretize", "--prices", "flat.txt", "--out", "s.txt"]);
    assert_eq!(out.status.code(), Some(4));
    assert!(String::from_utf8_lossy(&out.stderr).starts_with("error:"));
    // More lags than the series can support.
    ok(d, &["generate", "--horizon", "3000", "--out", "g.txt"]);
    assert_eq!(code(d, &["acf", "--series", "g.txt", "--max-lag", "5000", "--out", "a.csv"]), 2);
}
