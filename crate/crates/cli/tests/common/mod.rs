#![allow(dead_code)]

use std::fmt::Write as _;
use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;

use pointhop::rng::Stream;

/// Small pipeline so command tests stay fast.
pub const TINY_CONFIG: &str = r#"
schema_version = 1

[pipeline]
input_points = 128
unit_points = [128, 64, 32, 16]
k = [16, 16, 16, 16]
n_ac = [6, 8, 10, 12]
poolings = ["max", "mean", "l1", "l2"]

[classifier]
kind = "rf"
n_trees = 24
"#;

type Mesh = (Vec<[f64; 3]>, Vec<[usize; 3]>);
type MeshFn = fn([f64; 3]) -> Mesh;

fn cuboid(s: [f64; 3]) -> Mesh {
    let mut v = Vec::new();
    for x in [0.0, 1.0] {
        for y in [0.0, 1.0] {
            for z in [0.0, 1.0] {
                v.push([x * s[0], y * s[1], z * s[2]]);
            }
        }
    }
    let f = vec![
        [0, 1, 3],
        [0, 3, 2],
        [4, 6, 7],
        [4, 7, 5],
        [0, 4, 5],
        [0, 5, 1],
        [2, 3, 7],
        [2, 7, 6],
        [0, 2, 6],
        [0, 6, 4],
        [1, 5, 7],
        [1, 7, 3],
    ];
    (v, f)
}

fn tetrahedron(s: [f64; 3]) -> Mesh {
    let v = vec![[0.0, 0.0, 0.0], [s[0], 0.0, 0.0], [0.0, s[1], 0.0], [0.0, 0.0, s[2]]];
    (v, vec![[0, 2, 1], [0, 1, 3], [0, 3, 2], [1, 2, 3]])
}

fn octahedron(s: [f64; 3]) -> Mesh {
    let v = vec![
        [s[0], 0.0, 0.0],
        [-s[0], 0.0, 0.0],
        [0.0, s[1], 0.0],
        [0.0, -s[1], 0.0],
        [0.0, 0.0, s[2]],
        [0.0, 0.0, -s[2]],
    ];
    let f = vec![
        [0, 2, 4],
        [2, 1, 4],
        [1, 3, 4],
        [3, 0, 4],
        [2, 0, 5],
        [1, 2, 5],
        [3, 1, 5],
        [0, 3, 5],
    ];
    (v, f)
}

pub fn off_text((v, f): &Mesh) -> String {
    let mut s = format!("OFF\n{} {} 0\n", v.len(), f.len());
    for p in v {
        let _ = writeln!(s, "{} {} {}", p[0], p[1], p[2]);
    }
    for t in f {
        let _ = writeln!(s, "3 {} {} {}", t[0], t[1], t[2]);
    }
    s
}

/// `<root>/<class>/<split>/<class>_<i>.off` for three solid classes.
pub fn write_mesh_dataset(root: &Path, train: usize, test: usize, seed: u64) {
    let mut rng = Stream::new(seed);
    let shapes: [(&str, MeshFn); 3] = [("box", cuboid), ("octa", octahedron), ("tet", tetrahedron)];
    for (name, make) in shapes {
        for (split, n) in [("train", train), ("test", test)] {
            let dir = root.join(name).join(split);
            fs::create_dir_all(&dir).unwrap();
            for i in 0..n {
                let s = [0.5 + rng.uniform(), 0.5 + rng.uniform(), 0.5 + rng.uniform()];
                fs::write(dir.join(format!("{name}_{i:03}.off")), off_text(&make(s))).unwrap();
            }
        }
    }
}

/// Converted dataset plus a tiny config file, inside `dir`.
pub fn prepared_dataset(dir: &Path) -> (PathBuf, PathBuf) {
    let raw = dir.join("raw");
    let conv = dir.join("conv");
    write_mesh_dataset(&raw, 10, 4, 11);
    let status = pointhop(&[
        "convert",
        raw.to_str().unwrap(),
        conv.to_str().unwrap(),
        "--seed",
        "5",
        "--points",
        "256",
    ]);
    assert_eq!(status.0, 0, "{}", status.2);
    let cfg = dir.join("tiny.toml");
    fs::write(&cfg, TINY_CONFIG).unwrap();
    (conv, cfg)
}

/// Run the binary; returns (exit code, stdout, stderr).
pub fn pointhop(args: &[&str]) -> (i32, String, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_pointhop"))
        .args(args)
        .output()
        .unwrap();
    (
        out.status.code().unwrap_or(-1),
        String::from_utf8_lossy(&out.stdout).into_owned(),
        String::from_utf8_lossy(&out.stderr).into_owned(),
    )
}

pub fn tree_files(root: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    let mut stack = vec![root.to_path_buf()];
    while let Some(d) = stack.pop() {
        for e in fs::read_dir(&d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                stack.push(p);
            } else {
                out.push((p.strip_prefix(root).unwrap().to_path_buf(), fs::read(&p).unwrap()));
            }
        }
    }
    out.sort();
    out
}
