use std::fs;
use std::path::Path;
use std::process::{Command, Output};

fn cli(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_anytime-tdp")).args(args).output().unwrap()
}

fn code(out: &Output) -> i32 {
    out.status.code().unwrap()
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

#[test]
fn worked_example_from_evalues() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    let sets = dir.path().join("sets.txt");
    fs::write(&ev, "time,h1,h2,h3,h4\n0,1,1,1,1\n1,20,8,0.5,10\n").unwrap();
    fs::write(&sets, "# worked example\nR:1,2\n").unwrap();
    let out = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "0.2"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], "time,set_label,c_inst,c_ard,tdp_inst,tdp_ard");
    assert_eq!(lines[1], "0,R,2,2,0,0");
    assert_eq!(lines[2], "1,R,1,1,0.5,0.5");
    assert!(String::from_utf8_lossy(&out.stderr).contains("R: time 1"));
}

#[test]
fn observations_produce_one_row_per_time_and_set() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    let sets = dir.path().join("sets.txt");
    let out_path = dir.path().join("out.csv");
    let mut text = String::from("time,a,b,c\n");
    for t in 1..=30 {
        text.push_str(&format!("{t},{},{},{}\n", 1.5 + 0.1 * ((t * 7) % 5) as f64, -0.2 + 0.3 * ((t * 3) % 4) as f64 - 0.4, 2.0));
    }
    fs::write(&obs, text).unwrap();
    fs::write(&sets, "ab:1-2\nall:1-3\n").unwrap();
    for family in [&["--family", "gaussian_lr"][..], &["--family", "t_lr", "--delta", "0.8"], &["--family", "mom", "--prior", "two_sided"]] {
        let mut args = vec!["bound", "--observations", p(&obs), "--sets", p(&sets), "--alpha", "0.1", "-o", p(&out_path)];
        args.extend_from_slice(family);
        let out = cli(&args);
        assert_eq!(code(&out), 0, "{family:?}: {}", String::from_utf8_lossy(&out.stderr));
        let written = fs::read_to_string(&out_path).unwrap();
        let rows: Vec<&str> = written.lines().skip(1).collect();
        assert_eq!(rows.len(), 60);
        assert!(rows[0].starts_with("1,ab,"));
        assert!(rows[59].starts_with("30,all,"));
    }
}

#[test]
fn input_and_configuration_errors_have_distinct_exit_codes() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    let sets = dir.path().join("sets.txt");
    fs::write(&sets, "R:1\n").unwrap();

    fs::write(&ev, "time,h1\n1,2\n").unwrap();
    let missing_alpha = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets)]);
    assert_eq!(code(&missing_alpha), 2);
    let bad_alpha = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "1.5"]);
    assert_eq!(code(&bad_alpha), 2);
    let both = cli(&["bound", "--evalues", p(&ev), "--observations", p(&ev), "--sets", p(&sets), "--alpha", "0.1"]);
    assert_eq!(code(&both), 2);

    fs::write(&ev, "time,h1\n1,-2\n").unwrap();
    let negative = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "0.1"]);
    assert_eq!(code(&negative), 1);
    assert!(String::from_utf8_lossy(&negative.stderr).contains("negative"));

    fs::write(&ev, "time,h1\n0,3\n").unwrap();
    let bad_origin = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "0.1"]);
    assert_eq!(code(&bad_origin), 1);

    fs::write(&ev, "time,h1\n1,x\n").unwrap();
    let garbage = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "0.1"]);
    assert_eq!(code(&garbage), 1);

    fs::write(&ev, "time,h1\n1,2\n").unwrap();
    fs::write(&sets, "R:2\n").unwrap();
    let out_of_range = cli(&["bound", "--evalues", p(&ev), "--sets", p(&sets), "--alpha", "0.1"]);
    assert_eq!(code(&out_of_range), 1);
}

#[test]
fn resume_rejects_conflicts_and_gaps() {
    let dir = tempfile::tempdir().unwrap();
    let obs = dir.path().join("obs.csv");
    let more = dir.path().join("more.csv");
    let gap = dir.path().join("gap.csv");
    let sets = dir.path().join("sets.txt");
    let state = dir.path().join("state.json");
    let out_path = dir.path().join("out.csv");
    fs::write(&obs, "time,a,b\n1,0.3,1\n2,0.1,2\n3,0.5,1.5\n").unwrap();
    fs::write(&more, "time,a,b\n4,0.2,1.1\n").unwrap();
    fs::write(&gap, "time,a,b\n5,0.2,1.1\n").unwrap();
    fs::write(&sets, "both:1,2\n").unwrap();
    let first = cli(&[
        "bound", "--observations", p(&obs), "--sets", p(&sets), "--alpha", "0.2", "--family", "t_lr",
        "-o", p(&out_path), "--state-out", p(&state),
    ]);
    assert_eq!(code(&first), 0, "{}", String::from_utf8_lossy(&first.stderr));

    let clash = cli(&["bound", "--observations", p(&more), "--resume", p(&state), "--alpha", "0.1", "-o", p(&out_path)]);
    assert_eq!(code(&clash), 2);
    let family_clash = cli(&["bound", "--observations", p(&more), "--resume", p(&state), "--family", "mom", "-o", p(&out_path)]);
    assert_eq!(code(&family_clash), 2);
    let wrong_mode = cli(&["bound", "--evalues", p(&more), "--resume", p(&state), "-o", p(&out_path)]);
    assert_eq!(code(&wrong_mode), 2);
    let skipped = cli(&["bound", "--observations", p(&gap), "--resume", p(&state), "-o", p(&out_path)]);
    assert_eq!(code(&skipped), 1);

    let ok = cli(&["bound", "--observations", p(&more), "--resume", p(&state), "--alpha", "0.2", "-o", p(&out_path)]);
    assert_eq!(code(&ok), 0, "{}", String::from_utf8_lossy(&ok.stderr));
    let text = fs::read_to_string(&out_path).unwrap();
    assert_eq!(text.lines().count(), 5);
    assert!(text.lines().last().unwrap().starts_with("4,both,"));

    fs::write(&state, "{\"format\": \"something-else\"}").unwrap();
    let corrupt = cli(&["bound", "--observations", p(&more), "--resume", p(&state)]);
    assert_eq!(code(&corrupt), 1);
}

#[test]
fn convert_writes_p_processes() {
    let dir = tempfile::tempdir().unwrap();
    let ev = dir.path().join("e.csv");
    fs::write(&ev, "time,h1,h2\n0,1,1\n1,4,0.5\n2,2,0\n3,10,3\n").unwrap();
    let out = cli(&["convert", "--evalues", p(&ev)]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = String::from_utf8(out.stdout).unwrap();
    assert_eq!(text, "time,h1,h2\n0,1,1\n1,0.25,1\n2,0.25,1\n3,0.1,0.3333333333333333\n");
}

#[test]
fn oracle_command_reports_agreement() {
    let out = cli(&["oracle", "--instances", "300", "--seed", "9", "--ties"]);
    assert_eq!(code(&out), 0);
    assert!(String::from_utf8_lossy(&out.stderr).contains("300 instances checked, 0 mismatches"));
    let too_big = cli(&["oracle", "--max-m", "21"]);
    assert_eq!(code(&too_big), 2);
}

#[test]
fn simulate_writes_metrics_and_raw_bounds() {
    let dir = tempfile::tempdir().unwrap();
    let scenario = dir.path().join("s.txt");
    let metrics = dir.path().join("m.csv");
    let raw = dir.path().join("raw.csv");
    fs::write(
        &scenario,
        "m = 12\nn_false = 6\nN = 20\nr_size = 4\npi1_list = 0.25, 0.75\niterations = 8\nburn_in = 5\nfamily = gaussian_lr\ndelta = 0.5\nard = true\n",
    )
    .unwrap();
    let out = cli(&["simulate", "--scenario", p(&scenario), "-o", p(&metrics), "--raw", p(&raw), "--seed", "3"]);
    assert_eq!(code(&out), 0, "{}", String::from_utf8_lossy(&out.stderr));
    let text = fs::read_to_string(&metrics).unwrap();
    assert_eq!(text.lines().next().unwrap(), "time,pi1,violation_prop,mean_bound,q10,q50,q90");
    assert_eq!(text.lines().count(), 1 + 16 * 2);
    let raw_text = fs::read_to_string(&raw).unwrap();
    assert_eq!(raw_text.lines().next().unwrap(), "iteration,time,set_label,c_inst,c_ard,tdp_reported");

    let again = dir.path().join("m2.csv");
    cli(&["simulate", "--scenario", p(&scenario), "-o", p(&again), "--seed", "3"]);
    assert_eq!(fs::read(&metrics).unwrap(), fs::read(&again).unwrap());

    fs::write(&scenario, "m = 12\nbogus = 1\n").unwrap();
    let bad = cli(&["simulate", "--scenario", p(&scenario)]);
    assert_eq!(code(&bad), 2);
}
