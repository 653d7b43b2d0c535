use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn xprtool(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_xprtool"))
        .args(args)
        .output()
        .expect("spawn xprtool")
}

fn ok(args: &[&str]) {
    let out = xprtool(args);
    assert!(
        out.status.success(),
        "{args:?}: {}",
        String::from_utf8_lossy(&out.stderr)
    );
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn listing(dir: &Path) -> Vec<String> {
    let mut names: Vec<_> = fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().file_name().into_string().unwrap())
        .collect();
    names.sort();
    names
}

fn gen(out: &Path, seed: &str) {
    ok(&["gen", "--seed", seed, "--out", p(out), "--links", "3", "--paths", "20"]);
}

#[test]
fn gen_detect_fit_round_trip() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, d, f) = (tmp.path().join("g"), tmp.path().join("d"), tmp.path().join("f"));
    gen(&g, "5");
    let files = listing(&g);
    assert!(files.contains(&"truth.txt".to_string()));
    assert_eq!(files.iter().filter(|n| n.ends_with(".main.padp")).count(), 3);
    assert_eq!(files.iter().filter(|n| n.ends_with(".cross.padp")).count(), 3);
    assert_eq!(listing(&g.join("truth")).len(), 3);

    ok(&["detect", "--input", p(&g), "--out", p(&d)]);
    let files = listing(&d);
    for suffix in [".mpc.csv", ".profile.dat", ".markers.dat"] {
        assert_eq!(files.iter().filter(|n| n.ends_with(suffix)).count(), 3, "{suffix}");
    }
    assert!(files.contains(&"xpr_scatter.dat".to_string()));
    assert!(files.contains(&"xpr_band.dat".to_string()));

    ok(&["fit", "--input", p(&d), "--out", p(&f), "--model", "both"]);
    let table = fs::read_to_string(f.join("fit_table.csv")).unwrap();
    let lines: Vec<_> = table.lines().collect();
    assert_eq!(lines.len(), 2);
    assert!(lines[0].starts_with("campaign_id,"));
    let blocks = fs::read_to_string(f.join("fit_synthetic.toml")).unwrap();
    assert!(blocks.contains("alpha2") && blocks.contains("mu1"), "{blocks}");

    // the ground truth is fittable through the same path
    ok(&["fit", "--input", p(&g.join("truth")), "--out", p(&tmp.path().join("ft")), "--model", "2", "--type3-mode", "drop"]);
}

#[test]
fn validate_and_sample_write_reports() {
    let tmp = tempfile::tempdir().unwrap();
    let (g, v, s) = (tmp.path().join("g"), tmp.path().join("v"), tmp.path().join("s"));
    gen(&g, "9");
    ok(&["validate", "--seed", "1", "--input", p(&g.join("truth")), "--out", p(&v), "--realizations", "20"]);
    let report = fs::read_to_string(v.join("validation.csv")).unwrap();
    assert_eq!(report.lines().count(), 3);
    let table = fs::read_to_string(v.join("campaign_table.csv")).unwrap();
    assert!(!table.lines().nth(1).unwrap().contains(",NA,NA,"), "{table}");

    ok(&["sample", "--seed", "2", "--out", p(&s), "--count", "50", "--l-ex", "0", "--l-ex-max", "30"]);
    let matrices = fs::read_to_string(s.join("matrices.csv")).unwrap();
    assert_eq!(matrices.lines().count(), 51);
}

#[test]
fn empty_mpc_file_is_reported_by_name() {
    let tmp = tempfile::tempdir().unwrap();
    let input = tmp.path().join("in");
    fs::create_dir(&input).unwrap();
    fs::write(input.join("broken.mpc.csv"), "").unwrap();
    let out = xprtool(&["fit", "--input", p(&input), "--out", p(&tmp.path().join("o"))]);
    assert!(!out.status.success());
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("broken.mpc.csv"), "{stderr}");
}

#[test]
fn stochastic_commands_require_a_seed() {
    let tmp = tempfile::tempdir().unwrap();
    let out = xprtool(&["gen", "--out", p(tmp.path())]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("--seed"));
}

#[test]
fn config_file_supplies_defaults_and_flags_win() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = tmp.path().join("run.toml");
    let out = tmp.path().join("g");
    fs::write(&cfg, format!("seed = 3\nlinks = 4\npaths = 5\nout = {:?}\n", p(&out))).unwrap();
    ok(&["gen", "--config", p(&cfg), "--links", "2"]);
    assert_eq!(listing(&out).iter().filter(|n| n.ends_with(".main.padp")).count(), 2);

    fs::write(&cfg, "seed = 3\nbogus = 1\n").unwrap();
    assert!(!xprtool(&["gen", "--config", p(&cfg)]).status.success());
}

#[test]
fn reruns_are_byte_identical() {
    let tmp = tempfile::tempdir().unwrap();
    let mut snapshots = Vec::new();
    for run in 0..2 {
        let root = tmp.path().join(format!("run{run}"));
        let (g, d, f) = (root.join("g"), root.join("d"), root.join("f"));
        gen(&g, "17");
        ok(&["detect", "--input", p(&g), "--out", p(&d)]);
        ok(&["fit", "--input", p(&d), "--out", p(&f)]);
        let mut files = Vec::new();
        for dir in [&g, &d, &f] {
            for name in listing(dir) {
                let path = dir.join(&name);
                if path.is_file() {
                    files.push((name, fs::read(path).unwrap()));
                }
            }
        }
        snapshots.push(files);
    }
    assert_eq!(snapshots[0], snapshots[1]);
}

#[test]
fn parameter_file_drives_sampling() {
    let tmp = tempfile::tempdir().unwrap();
    let params = tmp.path().join("m.toml");
    fs::write(&params, "model = 1\nmu1 = 40.0\nsigma1 = 0.5\n").unwrap();
    let s = tmp.path().join("s");
    ok(&["sample", "--seed", "4", "--out", p(&s), "--count", "200", "--params", p(&params)]);
    let text = fs::read_to_string(s.join("matrices.csv")).unwrap();
    let xprs: Vec<f64> = text
        .lines()
        .skip(1)
        .map(|l| l.rsplit(',').next().unwrap().parse().unwrap())
        .collect();
    let mean = xprs.iter().sum::<f64>() / xprs.len() as f64;
    assert!((mean - 40.0).abs() < 0.2, "{mean}");

    fs::write(&params, "model = 3\n").unwrap();
    let out = xprtool(&["sample", "--seed", "4", "--out", p(&s), "--params", p(&params)]);
    assert!(!out.status.success());
    assert!(String::from_utf8_lossy(&out.stderr).contains("m.toml"));
}
