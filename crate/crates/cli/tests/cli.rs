use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn setrap(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_setrap"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn write_config(dir: &Path, body: &str) -> String {
    let path = dir.join("config.json");
    fs::write(&path, body).unwrap();
    path.to_string_lossy().into_owned()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn default_config_validates() {
    let o = setrap(&["validate"]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(String::from_utf8_lossy(&o.stdout).contains("configuration is valid"));
}

#[test]
fn negative_width_exits_2_naming_the_field() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"shape_overrides": {"TRIANGULAR": {"w_ax_um": -55}}}"#);
    let o = setrap(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("shape_overrides.TRIANGULAR.w_ax_um"), "{}", stderr(&o));
}

#[test]
fn alternate_area_warns_but_passes() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"geometry": {"target_area_um2": 1595}}"#);
    let o = setrap(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    assert!(stderr(&o).contains("warning"), "{}", stderr(&o));
    assert!(stderr(&o).contains("1650"));
}

#[test]
fn parse_errors_exit_2_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), "{\n  \"solver\": {\n    \"w0\": ,\n  }\n}");
    let o = setrap(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("line 3"), "{}", stderr(&o));

    let cfg = write_config(dir.path(), r#"{"solver": {"wO": 1e-6}}"#);
    let o = setrap(&["validate", "--config", &cfg]);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("wO"), "{}", stderr(&o));
}

#[test]
fn unknown_shape_flag_is_a_usage_error() {
    let o = setrap(&["validate", "--shape", "HEXAGON"]);
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn missing_config_file_is_io_failure() {
    let o = setrap(&["validate", "--config", "/nonexistent/config.json"]);
    assert_eq!(o.status.code(), Some(4));
}

#[test]
fn unwritable_output_is_io_failure() {
    let dir = tempfile::tempdir().unwrap();
    let blocker = dir.path().join("file");
    fs::write(&blocker, "x").unwrap();
    let out = blocker.join("sub");
    let o = setrap(&["shims", "--shape", "RECT", "--direction", "y", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(4), "{}", stderr(&o));
}

#[test]
fn transport_waveform_is_deterministic_and_reproducible_from_manifest() {
    let dir = tempfile::tempdir().unwrap();
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    let o = setrap(&["transport", "--shape", "TRIANGULAR", "--out", a.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));

    let wave = fs::read_to_string(a.join("transport_TRIANGULAR.csv")).unwrap();
    let lines: Vec<&str> = wave.lines().collect();
    assert_eq!(lines.len(), 102);
    let electrodes = lines[0].split(',').count() - 1;
    let layout = fs::read_to_string(a.join("layout_TRIANGULAR.json")).unwrap();
    assert_eq!(layout.matches("\"role\": \"DC\"").count(), electrodes);
    assert!(lines[1..].iter().all(|l| l.split(',').count() == electrodes + 1));

    let manifest = a.join("manifest.json");
    let o = setrap(&["transport", "--config", manifest.to_str().unwrap(), "--out", b.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for name in ["transport_TRIANGULAR.csv", "transport_TRIANGULAR_steps.csv", "layout_TRIANGULAR.json"] {
        assert_eq!(
            fs::read(a.join(name)).unwrap(),
            fs::read(b.join(name)).unwrap(),
            "{name} differs"
        );
    }
}

#[test]
fn infeasible_transport_exits_3() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_config(dir.path(), r#"{"solver": {"voltage_limit_v": 0.01}}"#);
    let out = dir.path().join("out");
    let o = setrap(&["transport", "--config", &cfg, "--shape", "RECT", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(3), "{}", stderr(&o));
    assert!(stderr(&o).contains("infeasible"), "{}", stderr(&o));
}

#[test]
fn unavailable_shim_is_success_with_status() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = setrap(&["shims", "--shape", "RECT", "--direction", "y", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    let summary = fs::read_to_string(out.join("shims_summary.csv")).unwrap();
    assert!(summary.contains("RECT,y,UNAVAILABLE"), "{summary}");
}

#[test]
fn characterization_includes_reference() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("out");
    let o = setrap(&["characterize", "--shape", "L", "--out", out.to_str().unwrap()]);
    assert_eq!(o.status.code(), Some(0), "{}", stderr(&o));
    for shape in ["L", "RECT"] {
        let text = fs::read_to_string(out.join(format!("characterize_{shape}.csv"))).unwrap();
        let mut lines = text.lines();
        assert_eq!(
            lines.next().unwrap(),
            "x_prime_um,value,dx,dy,dz,d2xx,d2yy,d2zz,d2xy,d2xz,d2yz"
        );
        assert_eq!(lines.count(), 301);
    }
}
