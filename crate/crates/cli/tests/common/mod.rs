#![allow(dead_code)]

use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use spgnn::graph::{separable_dataset, write_tu_dataset};

pub fn spgnn(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_spgnn"))
        .args(args)
        .output()
        .expect("spawn spgnn")
}

pub fn stdout(o: &Output) -> String {
    String::from_utf8_lossy(&o.stdout).into_owned()
}

pub fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

pub fn mutag_dir() -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR")).join("../../data")
}

/// Writes the 40-graph separable fixture as `<dir>/SEPARABLE` and returns
/// the data directory.
pub fn write_separable(dir: &Path) -> PathBuf {
    let d = separable_dataset(20, 1).unwrap();
    write_tu_dataset(&d, dir.join("SEPARABLE")).unwrap();
    dir.to_path_buf()
}

/// Flags that let the fixture train in a few seconds: the default batch of
/// 50 would give one optimiser step per epoch on 32 training graphs.
pub const FIXTURE_FLAGS: [&str; 6] = ["--lr", "0.001", "--batch-size", "8", "--epochs", "10,20"];

pub fn read(path: impl AsRef<Path>) -> String {
    fs::read_to_string(path.as_ref()).unwrap_or_else(|e| panic!("{}: {e}", path.as_ref().display()))
}
