use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use nemqubit_cli::ScenarioConfig;
use serde_json::Value;

fn configs() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs")
}

fn nemqubit(args: &[&str], out: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_nemqubit"))
        .args(args)
        .arg("--out")
        .arg(out)
        .output()
        .expect("binary runs")
}

fn shipped(name: &str) -> String {
    configs().join(name).display().to_string()
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.display().to_string()
}

fn summary(path: &Path) -> Vec<Value> {
    std::fs::read_to_string(path).unwrap().lines().map(|l| serde_json::from_str(l).unwrap()).collect()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

/// Last CSV row as (header, values).
fn last_row(path: &Path) -> (Vec<String>, Vec<f64>) {
    let text = std::fs::read_to_string(path).unwrap();
    let mut lines = text.lines();
    let header = lines.next().unwrap().split(',').map(String::from).collect();
    let last = lines.last().unwrap().split(',').map(|v| v.parse().unwrap()).collect();
    (header, last)
}

fn column(header: &[String], row: &[f64], name: &str) -> f64 {
    row[header.iter().position(|h| h == name).unwrap_or_else(|| panic!("no column {name}"))]
}

const JUNCTION: &str = r#"
[[junction]]
critical_current = "21 uA"
capacitance = "6 pF"
josephson_energy = "43.05 meV"
charging_energy = "53.33 neV"
"#;

#[test]
fn shipped_configs_round_trip_and_validate() {
    let mut seen = 0;
    for entry in std::fs::read_dir(configs()).unwrap() {
        let path = entry.unwrap().path();
        if path.extension().is_none_or(|e| e != "cfg") {
            continue;
        }
        seen += 1;
        let cfg = ScenarioConfig::load(&path).unwrap();
        let again = ScenarioConfig::from_toml(&cfg.to_toml()).unwrap();
        assert_eq!(cfg, again, "{}", path.display());
        if cfg.protocol.is_some() {
            cfg.protocol_spec().unwrap();
        }
        if cfg.spectrum.is_some() {
            cfg.bias_grid().unwrap();
        }
    }
    assert!(seen >= 9, "{seen} configs");
    for n in 6..=13 {
        let prefix = format!("fig{n:02}_");
        assert!(
            std::fs::read_dir(configs()).unwrap().any(|e| e.unwrap().file_name().to_string_lossy().starts_with(&prefix)),
            "missing fig{n:02}_*.cfg"
        );
    }
}

#[test]
fn config_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let unknown = write(dir.path(), "unknown.cfg", &format!("{JUNCTION}\n[spectrum]\nbias = [0.5]\nlevels = 4\ncolour = 3\n"));
    let o = nemqubit(&["spectrum", "--config", &unknown], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("colour"), "{}", stderr(&o));

    let wrong_unit = write(
        dir.path(),
        "unit.cfg",
        "[[junction]]\ncritical_current = \"21 uA\"\ncapacitance = \"6 uA\"\n[spectrum]\nbias = [0.5]\nlevels = 4\n",
    );
    let o = nemqubit(&["spectrum", "--config", &wrong_unit], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("capacitance"), "{}", stderr(&o));

    let empty = write(dir.path(), "empty.cfg", &format!("{JUNCTION}\n[spectrum]\nbias = []\nlevels = 4\n"));
    assert_eq!(nemqubit(&["spectrum", "--config", &empty], dir.path()).status.code(), Some(2));

    let top = write(dir.path(), "top.cfg", &format!("{JUNCTION}\n[spectrum]\nbias = [0.5, 1.0]\nlevels = 4\n"));
    let o = nemqubit(&["spectrum", "--config", &top], dir.path());
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("s = 1"), "{}", stderr(&o));

    assert_eq!(nemqubit(&["protocol"], dir.path()).status.code(), Some(2));
}

#[test]
fn spectrum_reproduces_the_level_table() {
    let dir = tempfile::tempdir().unwrap();
    let o = nemqubit(&["spectrum", "--config", &shipped("table1_spectrum.cfg")], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let path = dir.path().join("table1_spectrum.csv");
    let text = std::fs::read_to_string(&path).unwrap();
    let want = [[0.500, 1.500, 2.499, 3.498], [0.500, 1.499, 2.498, 3.496], [0.500, 1.497, 2.492, 3.485]];
    let rows: Vec<Vec<f64>> = text.lines().skip(1).map(|l| l.split(',').map(|v| v.parse().unwrap()).collect()).collect();
    assert_eq!(rows.len(), 3);
    for (row, w) in rows.iter().zip(want) {
        for m in 0..4 {
            assert!((row[1 + m] - w[m]).abs() < 0.002, "{row:?}");
        }
        // barrier and plasma frequency fall with bias
        assert!(row[row.len() - 2] < 1.0 && row[row.len() - 1] < 1.0);
    }

    let again = tempfile::tempdir().unwrap();
    nemqubit(&["spectrum", "--config", &shipped("table1_spectrum.cfg"), "--threads", "1"], again.path());
    assert_eq!(text, std::fs::read_to_string(again.path().join("table1_spectrum.csv")).unwrap());
}

fn hold_config(dir: &Path, coupling: &str) -> String {
    write(
        dir,
        "hold.cfg",
        &format!(
            r#"{JUNCTION}
[resonator]
material = "aln"
radius = "0.230 um"
frequency = "15 GHz"
gate = "full"
{coupling}

[integrator]
dt = "1 fs"
max_samples = 51

[schedule]
levels = 4
phonons = 4
initial = [{{ state = "1_0", amplitude = [0.6, 0.0] }}, {{ state = "0_1", amplitude = [0.0, 0.8] }}]

[[schedule.junction]]
segments = [
  {{ kind = "hold", s = 0.40, duration = "1 ns" }},
  {{ kind = "trapezoid", from = 0.40, to = 0.5446, duration = "1 ns" }},
  {{ kind = "hold", s = 0.5446, duration = "3 ns" }},
]
"#
        ),
    )
}

#[test]
fn uncoupled_simulation_is_flat_and_reproducible() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hold_config(dir.path(), "coupling = \"0 ueV\"");
    let o = nemqubit(&["simulate", "--config", &cfg, "--seedless"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let csv = std::fs::read_to_string(dir.path().join("hold.csv")).unwrap();
    let jsonl = std::fs::read_to_string(dir.path().join("hold.jsonl")).unwrap();
    let lines: Vec<&str> = csv.lines().collect();
    assert_eq!(lines.len(), 52);
    let header: Vec<&str> = lines[0].split(',').collect();
    // the ramp moves population along the junction ladder, but nothing
    // reaches or leaves the resonator: the phonon distribution is fixed
    let phonon = |n: usize| -> Vec<usize> {
        (0..header.len()).filter(|&i| header[i].starts_with("p_") && header[i].ends_with(&format!("_{n}"))).collect()
    };
    let (zero, one) = (phonon(0), phonon(1));
    assert_eq!(zero.len(), 4);
    let p10 = header.iter().position(|h| *h == "p_1_0").unwrap();
    for l in &lines[1..] {
        let v: Vec<f64> = l.split(',').map(|x| x.parse().unwrap()).collect();
        assert!((zero.iter().map(|&i| v[i]).sum::<f64>() - 0.36).abs() < 1e-10);
        assert!((one.iter().map(|&i| v[i]).sum::<f64>() - 0.64).abs() < 1e-10);
        assert!((v[p10] - 0.36).abs() < 5e-3, "{}", v[p10]);
    }

    let again = nemqubit(&["simulate", "--config", &cfg, "--seedless"], dir.path());
    assert!(again.status.success());
    assert_eq!(csv, std::fs::read_to_string(dir.path().join("hold.csv")).unwrap());
    assert_eq!(jsonl, std::fs::read_to_string(dir.path().join("hold.jsonl")).unwrap());
    assert!(!jsonl.contains("wall_time_s"));
}

#[test]
fn coarse_step_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = hold_config(dir.path(), "");
    let o = nemqubit(&["simulate", "--config", &cfg, "--dt", "20000"], dir.path());
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("norm drift"), "{}", stderr(&o));
    assert!(!dir.path().join("hold.csv").exists());
}

#[test]
fn storage_trajectory_ends_in_the_resonator() {
    let dir = tempfile::tempdir().unwrap();
    let o = nemqubit(&["simulate", "--config", &shipped("fig06_storage.cfg"), "--dt", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let (h, row) = last_row(&dir.path().join("fig06_storage.csv"));
    assert!((column(&h, &row, "p_0_1") - 0.987).abs() < 0.01);
    assert!(column(&h, &row, "p_1_0") <= 0.01);
    assert!(column(&h, &row, "p_1_1") <= 0.01);
    assert!((column(&h, &row, "t_ns") - 64.8697).abs() < 1e-3);
}

#[test]
fn arctangent_storage_is_flagged() {
    let dir = tempfile::tempdir().unwrap();
    let o = nemqubit(&["protocol", "--config", &shipped("fig09_arctan.cfg"), "--dt", "4"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let s = &summary(&dir.path().join("fig09_arctan.jsonl"))[0];
    assert_eq!(s["passed"], Value::Bool(false));
    assert!(s["fidelity"].as_f64().unwrap() < 0.9);
    assert!(stderr(&o).contains("below"));
}

#[test]
fn transfer_and_entangle_fidelities() {
    let dir = tempfile::tempdir().unwrap();
    for (name, want, tol) in [("fig12_transfer", 0.974, 0.01), ("fig13_entangle", 0.92, 0.02)] {
        let o = nemqubit(&["protocol", "--config", &shipped(&format!("{name}.cfg")), "--dt", "4"], dir.path());
        assert!(o.status.success(), "{}", stderr(&o));
        let s = &summary(&dir.path().join(format!("{name}.jsonl")))[0];
        let f = s["fidelity"].as_f64().unwrap();
        assert!((f - want).abs() < tol, "{name}: {f}");
        assert_eq!(s["passed"], Value::Bool(true));
        assert_eq!(s["dt_fs"].as_f64().unwrap(), 4.0);
    }
}

#[test]
fn sweep_keeps_order_and_finds_the_equator_bias() {
    let dir = tempfile::tempdir().unwrap();
    let text = std::fs::read_to_string(configs().join("sweep_off_bias.cfg"))
        .unwrap()
        .replace("values = [0.15, 0.18, 0.21, 0.30, 0.40]", "values = [0.40, 0.18]");
    let cfg = write(dir.path(), "sweep.cfg", &text);
    let o = nemqubit(&["sweep", "--config", &cfg, "--dt", "8"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let lines = summary(&dir.path().join("sweep.jsonl"));
    let xs: Vec<f64> = lines.iter().map(|l| l["sweep_value"].as_f64().unwrap()).collect();
    assert_eq!(xs, [0.40, 0.18]);
    let f: Vec<f64> = lines.iter().map(|l| l["fidelity"].as_f64().unwrap()).collect();
    assert!(f[1] > 0.95 && f[0] < f[1] - 0.1, "{f:?}");
}

#[test]
fn accept_reports_and_catches_a_mutation() {
    let dir = tempfile::tempdir().unwrap();
    let o = nemqubit(&["accept", "--only", "1,2,3,4,5"], dir.path());
    assert!(o.status.success(), "{}", stderr(&o));
    let stdout = String::from_utf8_lossy(&o.stdout);
    assert_eq!(stdout.lines().filter(|l| l.starts_with("[PASS]")).count(), 5, "{stdout}");
    assert!(stdout.lines().all(|l| l.ends_with(" s]")));
    let records = summary(&dir.path().join("acceptance.jsonl"));
    assert_eq!(records.len(), 5);
    assert!(records.iter().all(|r| r["wall_time_s"].as_f64().is_some()));

    let o = nemqubit(&["accept", "--only", "4", "--perturb", "piezo_modulus=1.1"], dir.path());
    assert_eq!(o.status.code(), Some(4), "{}", String::from_utf8_lossy(&o.stdout));
}
