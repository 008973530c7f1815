use std::collections::BTreeMap;
use std::fs;
use std::path::Path;
use std::process::{Command, Output};

use resetlab::analysis::step_metrics;
use resetlab_cli::output::read_trace;

fn resetlab(args: &[&str], root: Option<&Path>) -> Output {
    let mut cmd = Command::new(env!("CARGO_BIN_EXE_resetlab"));
    cmd.args(args).env_remove("RESETLAB_OUTPUT_ROOT");
    if let Some(r) = root {
        cmd.env("RESETLAB_OUTPUT_ROOT", r);
    }
    cmd.output().unwrap()
}

fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn csvs(dir: &Path) -> BTreeMap<String, Vec<u8>> {
    fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), fs::read(&p).unwrap()))
        .collect()
}

fn metrics_rows(text: &str) -> Vec<BTreeMap<String, String>> {
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    lines
        .map(|l| header.iter().map(|h| h.to_string()).zip(l.split(',').map(String::from)).collect())
        .collect()
}

#[test]
fn list_shows_bundled_catalog() {
    let out = resetlab(&["list"], None);
    assert!(out.status.success());
    let text = stdout(&out);
    let names: Vec<&str> = text.lines().map(|l| l.split_whitespace().next().unwrap()).collect();
    assert!(names.len() >= 8, "{text}");
    for n in ["fig4", "fig5", "fig6", "fig7", "fig8", "fig9", "fig10", "table1"] {
        assert!(names.contains(&n), "{n} missing");
    }
    let dir = Path::new(env!("CARGO_MANIFEST_DIR")).join("scenarios");
    for n in &names {
        assert!(dir.join(format!("{n}.cfg")).is_file(), "{n}.cfg not shipped");
    }
    assert!(!text.contains("invalid"));

    let empty = tempfile::tempdir().unwrap();
    let with_dir = resetlab(&["list", "--dir", empty.path().to_str().unwrap()], None);
    assert_eq!(stdout(&with_dir), text);
}

#[test]
fn malformed_configs_exit_2_naming_the_key() {
    let dir = tempfile::tempdir().unwrap();
    let cases = [
        ("schema = 1\nkind = \"movie\"\noutput = \"x\"\n[controller]\n", "kind"),
        ("schema = 1\nkind = \"step\"\noutput = \"x\"\n[controller]\nfamilies = [\"pid\"]\n", "controller.families[0]"),
        ("schema = 1\nkind = \"step\"\noutput = \"x\"\n[controller]\n[sim]\ndtt = 1e-5\n", "sim.dtt"),
        ("schema = 2\nkind = \"step\"\noutput = \"x\"\n[controller]\n", "schema"),
    ];
    for (i, (text, key)) in cases.iter().enumerate() {
        let path = dir.path().join(format!("bad{i}.cfg"));
        fs::write(&path, text).unwrap();
        for verb in ["validate", "run"] {
            let out = resetlab(&[verb, path.to_str().unwrap()], Some(dir.path()));
            assert_eq!(out.status.code(), Some(2), "{verb} {text}");
            assert!(stderr(&out).contains(&format!("{key}:")), "{}", stderr(&out));
        }
    }
    let out = resetlab(&["validate", "no-such-scenario"], None);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn numerical_failure_exits_3_with_grid_point() {
    let dir = tempfile::tempdir().unwrap();
    // the loop is already stable at the low end of the bracket
    let text = "schema = 1\nkind = \"windup\"\noutput = \"w\"\n[controller]\nfamilies = [\"pind\"]\n\
                [windup]\nlow = 10000\nhigh = 20000\n";
    let path = dir.path().join("w.cfg");
    fs::write(&path, text).unwrap();
    let out = resetlab(&["run", path.to_str().unwrap()], Some(dir.path()));
    assert_eq!(out.status.code(), Some(3));
    assert!(stderr(&out).contains("pind_n1"), "{}", stderr(&out));
}

#[test]
fn fig6_outputs_are_complete_and_reproducible() {
    let a = tempfile::tempdir().unwrap();
    let b = tempfile::tempdir().unwrap();
    let out = resetlab(&["run", "fig6"], Some(a.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let listed = stdout(&out);
    let out_b = resetlab(&["--workers", "1", "run", "fig6.cfg", "--out", b.path().to_str().unwrap()], None);
    assert!(out_b.status.success(), "{}", stderr(&out_b));

    let dir = a.path().join("fig6");
    let files = csvs(&dir);
    let traces: Vec<&String> = files
        .keys()
        .filter(|k| !k.ends_with("_resets.csv") && *k != "metrics.csv")
        .collect();
    assert_eq!(traces.len(), 8, "{traces:?}");
    assert_eq!(traces.iter().filter(|k| k.starts_with("cr_")).count(), 4);
    for t in &traces {
        assert!(files.contains_key(&t.replace(".csv", "_resets.csv")));
        assert!(listed.contains(t.as_str()));
    }
    assert!(dir.join("output.svg").is_file() && dir.join("control.svg").is_file());

    // byte-identical reruns, regardless of worker count
    assert_eq!(files, csvs(&b.path().join("fig6")));

    // traces read back from disk reproduce the metrics table exactly
    let metrics = metrics_rows(&String::from_utf8(files["metrics.csv"].clone()).unwrap());
    assert_eq!(metrics.len(), 8);
    for row in metrics {
        let label = &row["label"];
        let tr = read_trace(
            std::str::from_utf8(&files[&format!("{label}.csv")]).unwrap(),
            std::str::from_utf8(&files[&format!("{label}_resets.csv")]).unwrap(),
        )
        .unwrap();
        let m = step_metrics(&tr).unwrap();
        let bits = |k: &str| row[k].parse::<f64>().unwrap().to_bits();
        assert_eq!(bits("overshoot_pct"), m.overshoot_pct.to_bits(), "{label}");
        assert_eq!(bits("settling_time"), m.settling_time.to_bits(), "{label}");
        assert_eq!(bits("peak_control"), m.peak_control.to_bits(), "{label}");
        let linear = label.starts_with("pind");
        assert_eq!(tr.x1.iter().all(|v| v.is_nan()), linear);
        assert_eq!(tr.reset_times.is_empty(), linear);
    }
}

#[test]
fn table1_layout() {
    let dir = tempfile::tempdir().unwrap();
    let out = resetlab(&["run", "table1"], Some(dir.path()));
    assert!(out.status.success(), "{}", stderr(&out));
    let text = fs::read_to_string(dir.path().join("table1/windup.csv")).unwrap();
    let rows = metrics_rows(&text);
    assert_eq!(rows.len(), 2);
    assert_eq!(text.lines().next().unwrap().split(',').count(), 13);
    for (row, family) in rows.iter().zip(["pind", "cr"]) {
        assert_eq!(row["family"], family);
        for n in 1..=4 {
            let f = |s: &str| row[&format!("n{n}_{s}")].parse::<f64>().unwrap();
            assert!(f("low") < f("threshold") && f("threshold") < f("high"));
        }
    }
}

#[test]
fn hbeta_and_bode_scenarios() {
    let dir = tempfile::tempdir().unwrap();
    for s in ["hbeta", "fig4"] {
        let out = resetlab(&["run", s], Some(dir.path()));
        assert!(out.status.success(), "{}", stderr(&out));
    }
    let rows = metrics_rows(&fs::read_to_string(dir.path().join("hbeta/hbeta.csv")).unwrap());
    let cr: Vec<_> = rows.iter().filter(|r| r["label"] == "cr_n1").collect();
    assert_eq!(cr[0]["hbeta"], "certified");
    assert_eq!(cr[0]["verified"], "true");
    assert_eq!(cr[1]["hbeta"], "not-certified");
    assert!(cr[1]["lti_max_real_eig"].parse::<f64>().unwrap() > 0.0);

    let margins = metrics_rows(&fs::read_to_string(dir.path().join("fig4/margins.csv")).unwrap());
    assert_eq!(margins.len(), 8);
    for m in margins {
        assert!((m["crossover"].parse::<f64>().unwrap() / 100.0 - 1.0).abs() < 1e-6);
    }
}
