//! Determinism of the acceptance task across two processes.

use std::path::Path;
use std::process::Command;

use tempfile::TempDir;

fn run(dir: &Path) -> (i32, String) {
    let o = Command::new(env!("CARGO_BIN_EXE_klab"))
        .args(["acceptance", "--seed", "7", "--jobs", "4", "--only", "1,2,3,4,5,6,7,8,9", "--out", dir.to_str().unwrap()])
        .output()
        .unwrap();
    (o.status.code().unwrap_or(-1), String::from_utf8_lossy(&o.stdout).into_owned())
}

fn csvs(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<_> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|x| x == "csv"))
        .map(|p| (p.file_name().unwrap().to_string_lossy().into_owned(), std::fs::read(&p).unwrap()))
        .collect();
    out.sort();
    out
}

#[test]
fn repeated_runs_are_byte_identical() {
    let tmp = TempDir::new().unwrap();
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    let (code_a, stdout) = run(&a);
    let (code_b, _) = run(&b);
    print!("{stdout}");
    let (fa, fb) = (csvs(&a), csvs(&b));
    let same = !fa.is_empty() && fa == fb;
    let bytes: usize = fa.iter().map(|(_, c)| c.len()).sum();
    println!("criterion 10 {} determinism: {} files, {bytes} bytes, identical across processes: {same}", if same { "PASS" } else { "FAIL" }, fa.len());
    assert_eq!(stdout.lines().filter(|l| l.starts_with("criterion")).count(), 9);
    assert!(same);
    assert_eq!((code_a, code_b), (0, 0));
}
